use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CecError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CecError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("dataset generation failed: {0}")]
    Generation(String),

    #[error("training halted at epoch {epoch}: {reason}")]
    TrainingHalted { epoch: u32, reason: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("I/O error at epoch {epoch} writing {path}: {source}")]
    RunIo {
        epoch: u32,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl CecError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CecError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        CecError::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
