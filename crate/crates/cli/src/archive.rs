//! JSON run archives.
//!
//! Everything except the `timestamps` block is a pure function of the
//! configuration, so two runs of the same configuration differ only there.
//! Floats are written in shortest round-trip form, which preserves every bit
//! of the stored indices.

use std::path::Path;

use mtsfm::optimizer::{Campaign, CampaignSummary, SynthesisConfig, TrialFailure, TrialResult};
use serde::{Deserialize, Serialize};

use crate::{io_error, CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started_utc: String,
    pub finished_utc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub format_version: u32,
    pub generator: String,
    pub config: SynthesisConfig,
    pub summary: Option<CampaignSummary>,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub timestamps: Timestamps,
}

/// Which trial a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialSelector {
    Best,
    Index(usize),
}

impl std::str::FromStr for TrialSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "best" {
            return Ok(TrialSelector::Best);
        }
        s.parse()
            .map(TrialSelector::Index)
            .map_err(|_| format!("expected a trial index or \"best\", got {s:?}"))
    }
}

impl RunArchive {
    pub fn new(config: SynthesisConfig, campaign: Campaign, timestamps: Timestamps) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            generator: format!("mtsfm {}", env!("CARGO_PKG_VERSION")),
            config,
            summary: Some(campaign.summary),
            trials: campaign.trials,
            failures: campaign.failures,
            timestamps,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("archive values are finite");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str, origin: &str) -> CliResult<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::Runtime(format!("{origin}: not a run archive: {e}")))?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        match version {
            Some(v) if v == u64::from(FORMAT_VERSION) => {}
            Some(v) => {
                return Err(CliError::Runtime(format!(
                    "{origin}: archive format version {v} is not supported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(CliError::Runtime(format!("{origin}: archive has no format_version"))),
        }
        serde_json::from_value(value)
            .map_err(|e| CliError::Runtime(format!("{origin}: malformed run archive: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.to_json()).map_err(|e| io_error(path, e))
    }

    /// Resolves a selector against the stored trials. Unknown indices are usage errors.
    pub fn select(&self, selector: TrialSelector) -> CliResult<&TrialResult> {
        let index = match selector {
            TrialSelector::Best => self
                .summary
                .as_ref()
                .map(|s| s.best_trial)
                .ok_or_else(|| CliError::Runtime("archive holds no finished trials".into()))?,
            TrialSelector::Index(i) => i,
        };
        self.trials
            .iter()
            .find(|t| t.trial_index == index)
            .ok_or_else(|| {
                let ids: Vec<String> = self.trials.iter().map(|t| t.trial_index.to_string()).collect();
                CliError::Usage(format!(
                    "trial {index} is not in the archive (stored trials: {})",
                    if ids.is_empty() { "none".into() } else { ids.join(", ") }
                ))
            })
    }
}
