use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("quadrature did not converge (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    Quadrature { residual: f64, tolerance: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("insufficient counts: {0}")]
    InsufficientCounts(String),

    #[error("truncation: {message} (estimated probability {probability:.3e})")]
    Truncation { message: String, probability: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("pairing mismatch: {0}")]
    Pairing(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid descriptor: {0}")]
    Descriptor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
