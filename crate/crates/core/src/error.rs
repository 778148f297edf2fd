use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("problem too large: {n} variables exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("variable {var} fixed inconsistently")]
    InconsistentFixing { var: usize },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("bounds crossed at t={t}: ub={ub} < lb={lb}")]
    CrossedBounds { t: f64, ub: f64, lb: f64 },

    #[error("trace contains no bound data")]
    EmptyTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
