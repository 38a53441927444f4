//! Error type shared by every module.

use thiserror::Error;

/// Errors produced by kernel construction, convolution, conversion and analysis.
#[derive(Debug, Error)]
pub enum VolterraError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("capacity exceeded: {0}")]
    CapExceeded(String),

    #[error("unsupported layer: {0}")]
    UnsupportedLayer(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("index collision while flattening at offset {0}")]
    IndexCollision(usize),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error("malformed network description: {0}")]
    Network(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VolterraError>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(VolterraError::ShapeMismatch(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(VolterraError::InvalidArgument(msg.into()))
}
