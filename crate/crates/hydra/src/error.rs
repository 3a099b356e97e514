//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HydraError {
    /// Bad configuration: unknown task, missing API key, invalid flag values.
    #[error("config error: {0}")]
    Config(String),

    /// A line of an input file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input data violates a structural invariant (duplicate ids, bad sizes).
    #[error("data error: {0}")]
    Data(String),

    /// The LLM backend failed after retries were exhausted.
    #[error("backend error: {0}")]
    Backend(String),

    /// A prediction was requested for a user without a head.
    #[error("no head for user {0}")]
    MissingHead(String),

    /// A head was fitted for a user that already has one.
    #[error("head already exists for user {0}")]
    HeadExists(String),

    /// Tensor dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// A model file is corrupt, truncated, or of the wrong version.
    #[error("model file error: {0}")]
    ModelFile(String),

    /// An ordinal or metric argument is out of range.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HydraError>;

impl HydraError {
    /// Process exit code for the CLI: 2 config, 3 data, 4 backend, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            HydraError::Config(_) => 2,
            HydraError::Parse { .. } | HydraError::Data(_) => 3,
            HydraError::Backend(_) => 4,
            _ => 1,
        }
    }
}
