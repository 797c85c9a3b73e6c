use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum AncError {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("adaptation diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("normal equations are ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("unsupported audio encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
}

pub type Result<T> = std::result::Result<T, AncError>;

pub(crate) fn validation(msg: impl Into<String>) -> AncError {
    AncError::Validation(msg.into())
}
