use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("vertex {vertex} out of range (vertex count {count})")]
    InvalidVertex { vertex: usize, count: usize },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("environment `{env}` was not sampled on space `{space}`")]
    SpaceMismatch { env: String, space: String },

    #[error("{0}")]
    Unsupported(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("event cap of {cap} events exceeded")]
    EventCapExceeded { cap: u64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed cache file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
