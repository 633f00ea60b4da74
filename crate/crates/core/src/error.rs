use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents or element counts do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A descriptor, quantizer or run configuration is not usable as given.
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller-supplied data is out of range (labels, batch sizes, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// An API was driven in the wrong order or with missing state.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: u64, message: String },

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    /// Broken internal invariant; indicates a bug, never bad user input.
    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
