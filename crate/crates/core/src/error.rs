use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("invalid search domain: {0}")]
    InvalidDomain(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no incumbent: at least one full objective evaluation is required")]
    MissingIncumbent,
    #[error("posterior standard deviation is zero at the query point")]
    ZeroVariance,
    #[error("predicted cost must be positive, got {0}")]
    NonPositiveCost(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("one-shot problem dimension {dim} exceeds the cap {cap}; reduce the sample count")]
    OneShotTooLarge { dim: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
