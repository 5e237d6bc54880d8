use std::path::Path;

use bnp_core::BnpError;

/// Everything that can stop a command, grouped by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("refused: {0}")]
    GuardRail(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    /// Process exit status: 2 config, 3 parse, 4 guard rail, 5 i/o, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::GuardRail(_) => 4,
            CliError::Io(_) => 5,
            CliError::Other(_) => 1,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl From<BnpError> for CliError {
    fn from(err: BnpError) -> Self {
        match err {
            // invalid model settings reach the core through the config
            BnpError::Usage(msg) => CliError::Config(msg),
            BnpError::GuardRail(msg) => CliError::GuardRail(msg),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
