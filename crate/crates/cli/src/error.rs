use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Harness-level failure modes. Configuration problems map to exit code 2,
/// runtime aborts to exit code 1.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config: {0}")]
    Invalid(String),

    #[error(transparent)]
    Core(#[from] markovsgd::Error),

    #[error(
        "{failed} of {total} trials aborted; first failure: trial {first_trial}: {first_error}"
    )]
    TrialsAborted {
        failed: usize,
        total: usize,
        first_trial: usize,
        first_error: String,
    },

    #[error("verification failed: {failed} of {total} properties")]
    VerificationFailed { failed: usize, total: usize },
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::TrialsAborted { .. } | HarnessError::VerificationFailed { .. } => 1,
            _ => 2,
        }
    }
}
