//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid disparity {0}: must be finite and > 0")]
    InvalidDisparity(f64),

    #[error("invalid depth {0}: must be finite and > 0")]
    InvalidDepth(f64),

    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),

    #[error("invalid camera parameters: {0}")]
    InvalidCamera(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("vector {0:?} is not unit length")]
    NonUnitNormal([f64; 3]),

    #[error("angle out of range: {0}")]
    AngleDomain(String),

    #[error("histogram has no samples")]
    EmptyHistogram,

    #[error("incompatible histograms: {0}")]
    IncompatibleHistograms(String),

    #[error("no valid pixels to evaluate")]
    NoValidPixels,

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    FileIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// True for errors caused by the environment rather than by the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::FileIo { .. } | Error::Io(_))
    }
}
