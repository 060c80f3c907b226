use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("conjugate gradient diverged: {0}")]
    Divergence(String),

    #[error("vector field queried at t = 0")]
    SingularTimestep,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),

    #[error("out-of-order context update: expected chunk {expected}, got {got}")]
    ContextOrder { expected: usize, got: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
