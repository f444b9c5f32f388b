//! Unified error type for simulator operations.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or buffer dimensions disagree with what an operation expects.
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    /// A value-level precondition was violated (ranges, probability rows, ...).
    #[error("invalid input to {context}: {detail}")]
    InvalidInput { context: &'static str, detail: String },

    /// A file exists but its contents are not what the format requires.
    #[error("{path}: {detail}")]
    DataFormat { path: String, detail: String },

    /// The data pool cannot satisfy a partition or sampling request.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A node id exceeds the topology or shard count.
    #[error("node id {node} out of range for {nodes} nodes")]
    NodeOutOfRange { node: usize, nodes: usize },

    /// NaN or infinity where finite values are required.
    #[error("non-finite value in {context} (first at flat index {index})")]
    NonFinite { context: &'static str, index: usize },

    /// A policy checkpoint does not match the current configuration.
    #[error("checkpoint incompatible: {0}")]
    CheckpointMismatch(String),

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// An I/O failure, with the path it happened on.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an I/O error with the path it occurred on.
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
