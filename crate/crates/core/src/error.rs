use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quadrature order {order}: need at least {min}")]
    InvalidOrder { order: usize, min: usize },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("unknown case {0} (expected 1..=6)")]
    UnknownCase(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layout mismatch: expected {expected} values, got {got}")]
    Layout { expected: usize, got: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("iteration diverged at step {iteration}: non-finite value encountered")]
    Divergence { iteration: usize },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
