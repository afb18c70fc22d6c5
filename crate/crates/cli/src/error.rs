use std::path::PathBuf;

use exact_coreset::CoresetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed files.
    #[error("{0}")]
    Input(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Coreset(#[from] CoresetError),
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    /// Process exit status: 2 for input errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Io { .. } => 2,
            CliError::Coreset(e) if e.is_input_error() => 2,
            CliError::Coreset(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
