use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("circulant embedding failed: eigenvalue {min_lambda:e} below tolerance (max {max_lambda:e})")]
    Embedding { min_lambda: f64, max_lambda: f64 },

    #[error("simulation diverged at timestep {step}: |value| = {value:e}")]
    Overflow { step: usize, value: f64 },

    #[error("grid size {0} too large for a dense covariance operator (limit {1})")]
    TooLarge(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training aborted at epoch {epoch}, batch {batch}: {reason}")]
    Training {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("replication b={b}, T={t}: {source}")]
    Cell {
        b: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
