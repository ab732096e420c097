use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid geometry: {0}")]
    Geometry(String),

    #[error("dense reconstruction of {voxels} voxels ({channels} channel(s)) exceeds the cap of {cap}")]
    DenseTooLarge {
        voxels: usize,
        channels: usize,
        cap: usize,
    },

    #[error("cannot shrink grid from {from:?} to {to:?}")]
    Shrink { from: [usize; 3], to: [usize; 3] },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFiniteGradient { group: &'static str },

    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: u64 },

    #[error("{path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error("requested {requested} views but only {available} are available")]
    NotEnoughViews { requested: usize, available: usize },

    #[error("view id {id} not present (split has {available} views)")]
    UnknownView { id: usize, available: usize },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint format version {actual} is not supported (expected {expected})")]
    CheckpointVersion { expected: u32, actual: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dataset(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            message: message.into(),
        }
    }
}
