use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = GrrnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GrrnError {
    /// Invalid hyperparameters or layer configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    /// An operation was requested that needs state which was never produced.
    #[error("state error: {0}")]
    State(String),

    /// Input data violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl GrrnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GrrnError::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::GrrnError::Shape(format!($($arg)*)) };
}

macro_rules! config_err {
    ($($arg:tt)*) => { $crate::error::GrrnError::Config(format!($($arg)*)) };
}

pub(crate) use config_err;
pub(crate) use shape_err;
