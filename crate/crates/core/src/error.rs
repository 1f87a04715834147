use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("cholesky failed with jitter up to {cap:e}; configuration is numerically degenerate")]
    JitterCapExceeded { cap: f64 },

    #[error("eigendecomposition did not converge")]
    EigenNoConvergence,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("initial state has zero posterior density: {0}")]
    InitialState(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
