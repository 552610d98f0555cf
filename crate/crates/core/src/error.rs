use std::path::PathBuf;

use thiserror::Error;

use crate::cf::LatentFactors;
use crate::sdae::SdaeNetwork;

pub type Result<T> = std::result::Result<T, CdlError>;

#[derive(Debug, Error)]
pub enum CdlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged after {retries} learning-rate halvings at sweep {sweep}")]
    Diverged {
        sweep: usize,
        retries: usize,
        /// State at the end of the last sweep that completed.
        last_good: Box<Checkpoint>,
    },
}

/// Parameters recovered from a diverged run.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub network: Option<SdaeNetwork>,
    pub factors: LatentFactors,
}

impl CdlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CdlError::Io {
            path: path.into(),
            source,
        }
    }
}
