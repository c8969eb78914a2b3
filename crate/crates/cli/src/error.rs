//! Command-line errors and their exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] mtsearch_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0} verification check(s) failed")]
    Verify(usize),
}

impl CliError {
    /// 1 for validation and other errors, 2 for resource caps, 3 for failed
    /// verification checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(mtsearch_core::Error::CapExceeded { .. }) => 2,
            CliError::Verify(_) => 3,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
