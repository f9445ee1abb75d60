use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Core(#[from] tenproj_core::Error),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("label {label} at index {index} is outside [0, {classes})")]
    InvalidLabel { index: usize, label: usize, classes: usize },

    #[error("backward called before forward in layer {0}")]
    NoForwardCache(&'static str),

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {error}")]
    Io { path: PathBuf, error: io::Error },

    #[error("empty dataset")]
    EmptyDataset,
}

impl NnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        NnError::Io {
            path: path.into(),
            error: source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        NnError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
