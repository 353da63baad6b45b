use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the analysis / envelope / synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("failed to read audio from {path}: {message}")]
    AudioRead { path: PathBuf, message: String },

    #[error("failed to write audio to {path}: {message}")]
    AudioWrite { path: PathBuf, message: String },

    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),

    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),

    #[error("{count} samples out of [-1, 1] and clipping is disabled")]
    Clipping { count: usize },

    #[error("window of {available} samples too short for {required} (frame {frame})")]
    WindowTooShort {
        frame: usize,
        available: usize,
        required: usize,
    },

    #[error("least-squares system singular at frame {frame}")]
    SingularSystem { frame: usize },

    #[error("singular ARMA response: |denominator| = {magnitude:e} at omega = {omega}")]
    SingularResponse { omega: f64, magnitude: f64 },

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("phase compensation {value} at frame {frame}, component {component} outside [-pi, pi]")]
    CompensationOutOfRange {
        frame: usize,
        component: usize,
        value: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("undefined metric: {0}")]
    Undefined(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
