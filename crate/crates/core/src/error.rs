use std::path::PathBuf;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("dimension mismatch at layer {layer}: {detail}")]
    LayerMismatch { layer: usize, detail: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("task id {got} out of order (expected {expected})")]
    TaskOrder { expected: usize, got: usize },

    #[error("transfer plan: {0}")]
    Plan(String),

    #[error("idx format ({path}): {detail}")]
    Idx { path: PathBuf, detail: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
