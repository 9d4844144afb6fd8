use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid noise model: {0}")]
    InvalidNoise(String),

    /// A theorem hypothesis required by the requested regime does not hold.
    #[error("regime hypothesis violated: {0}")]
    Hypothesis(String),

    /// The blow-up guard tripped.
    #[error("guard abort (trajectory {trajectory}, step {step}): {reason}")]
    Guard {
        trajectory: u64,
        step: u64,
        reason: String,
    },

    #[error("weight degeneracy: effective sample size {ess:.1} below threshold {threshold:.1}")]
    WeightDegeneracy { ess: f64, threshold: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
