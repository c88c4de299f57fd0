use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("covariance matrix is not positive definite at pivot {pivot} (jitter tried up to {jitter:e})")]
    NotPositiveDefinite { pivot: usize, jitter: f64 },

    #[error("grid with {steps} steps exceeds the dense factorization limit of {limit}")]
    GridTooLarge { steps: usize, limit: usize },

    #[error("width {eps} is not a positive integer multiple of dt = {dt}")]
    OffGrid { eps: f64, dt: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
