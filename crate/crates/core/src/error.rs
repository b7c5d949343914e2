use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to decode video {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("video {0} contains no frames")]
    EmptyVideo(PathBuf),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("data leakage: {count} sample id(s) appear in both train and validation sets (first: {first})")]
    Leakage { count: usize, first: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("temporal branch needs at least 2 frames, got {0}")]
    InsufficientFrames(usize),

    #[error("AUC is undefined: {0}")]
    UndefinedAuc(String),

    #[error("state error: {0}")]
    State(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
