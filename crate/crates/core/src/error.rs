use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("invalid depth {0}: must be positive")]
    InvalidDepth(f64),

    #[error("time {t} outside track span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("backward called without a recorded forward pass")]
    NoForwardPass,

    #[error("depth completion needs at least one valid sample")]
    NoDepthSamples,

    #[error("no valid placement: {0}")]
    PlacementUnavailable(String),

    #[error("light direction must point downward (z component {0})")]
    InvalidLight(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("optimization diverged at step {step}: loss {loss} vs {reference} 100 steps earlier")]
    Diverged {
        step: usize,
        loss: f64,
        reference: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
