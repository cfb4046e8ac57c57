use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented bound.
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimensions {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("dimension mismatch in {path}: expected {expected:?}, got {actual:?}")]
    FileDimensions {
        path: PathBuf,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("defect opacity mask is empty")]
    EmptyDefect,

    #[error("missing predictions for ids: {0:?}")]
    MissingPredictions(Vec<String>),

    #[error("no matched image/mask pairs")]
    NoPairs,

    #[error("invalid data: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("dataset generation aborted after {completed:?}: {source}")]
    PartialOutput {
        completed: Vec<usize>,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by inputs.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Image { .. } => true,
            Error::PartialOutput { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
