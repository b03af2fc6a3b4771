//! TOML configuration loading with line-level diagnostics.

use std::path::Path;

use mtsfm::optimizer::SynthesisConfig;

use crate::{CliError, CliResult};

/// Parses a configuration document. Missing fields take the design-example
/// defaults. Errors carry the offending line where one can be found.
pub fn parse_config(text: &str, origin: &str) -> CliResult<SynthesisConfig> {
    let config: SynthesisConfig = toml::from_str(text).map_err(|e| {
        let location = e
            .span()
            .map(|s| format!(":{}", line_of(text, s.start)))
            .unwrap_or_default();
        CliError::Usage(format!(
            "{origin}{location}: invalid configuration: {}",
            e.message()
        ))
    })?;
    config.validate().map_err(|e| {
        let message = match e {
            mtsfm::Error::InvalidArgument(m) => m,
            other => other.to_string(),
        };
        let location = message
            .split(|c: char| !(c.is_alphanumeric() || c == '_'))
            .find(|w| !w.is_empty())
            .and_then(|key| find_key(text, key))
            .map(|line| format!(":{line}"))
            .unwrap_or_default();
        CliError::Usage(format!("{origin}{location}: {message}"))
    })?;
    Ok(config)
}

pub fn load_config(path: &Path) -> CliResult<SynthesisConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: cannot read configuration: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of the first `key = ...` assignment or `[key]` table header.
fn find_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|line| {
        let line = line.trim();
        let name = line
            .trim_start_matches('[')
            .split(['=', ']'])
            .next()
            .unwrap_or("")
            .trim();
        name == key && (line.contains('=') || line.starts_with('['))
    })
    .map(|i| i + 1)
}
