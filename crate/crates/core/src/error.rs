use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (after jitter up to {max_jitter:e})")]
    NotPositiveDefinite { max_jitter: f64 },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {index} lies outside the domain bounds")]
    OutOfBounds { index: usize },

    #[error("baseline iteration time has not been established")]
    BaselineMissing,

    #[error("unknown objective `{0}`")]
    UnknownObjective(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
