use thiserror::Error;

/// Errors shared across the sketching and recovery modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("update index {index:?} out of shape {shape:?}")]
    UpdateOutOfShape { index: Vec<usize>, shape: Vec<usize> },

    #[error("sketch is frozen; no further updates accepted")]
    Frozen,

    #[error("merge mismatch: {0}")]
    MergeMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("capacity guard exceeded: {0}")]
    Capacity(String),

    #[error("stream mismatch between paired sketch states: {0}")]
    StreamMismatch(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("adversary exceeded its evaluation budget ({budget})")]
    Budget { budget: u64 },

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
