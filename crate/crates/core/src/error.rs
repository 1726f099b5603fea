use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} outside horizon [1, {horizon}]")]
    OutOfRange { index: u64, horizon: u64 },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("operation not supported for the {model} model: {what}")]
    UnsupportedModel { model: &'static str, what: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("hypothesis fails at shift k={k}: value {value} exceeds {limit}")]
    HypothesisFailed { k: u64, value: f64, limit: f64 },

    #[error("structure search exhausted; longest consistent chain n = {longest_chain:?}")]
    SearchExhausted { longest_chain: Vec<u64> },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
