use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid attribute: {0}")]
    InvalidAttribute(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("missing annotation: {0}")]
    MissingAnnotation(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate warp gradient (norm {norm:e} below floor)")]
    DegenerateGradient { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("segmentation failed")]
    SegmentationFailed,

    #[error("iris codes have no jointly valid bits")]
    NoOverlap,

    #[error("non-finite loss `{name}` at step {step}")]
    NonFinite { name: String, step: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint mismatch: identity minted with {expected}, bundle is {got}")]
    CheckpointMismatch { expected: String, got: String },

    #[error("failed to load {path}: {reason}")]
    Load { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
