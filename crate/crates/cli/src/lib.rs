//! Command-line front end for MTSFM beampattern synthesis campaigns.
//!
//! The binary wraps four commands: `synth` runs a campaign and writes a JSON
//! run archive, `eval` re-verifies a stored trial and exports its beampattern,
//! `analyze` exports spectrum, spectrogram and ambiguity data for one
//! waveform, and `report` prints per-trial statistics.

pub mod archive;
pub mod commands;
pub mod config;
pub mod export;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, selectors or configuration. Exit code 2.
    #[error("{0}")]
    Usage(String),
    /// I/O, campaign or verification failure. Exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<mtsfm::Error> for CliError {
    fn from(e: mtsfm::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
