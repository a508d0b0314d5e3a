use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("coverage error: {uncovered} uncovered pixels, first gaps (row, col): {gaps:?}")]
    Coverage {
        uncovered: usize,
        gaps: Vec<(usize, usize)>,
    },
    #[error("non-finite loss at epoch {epoch}, step {step}; diagnostic checkpoint at {checkpoint:?}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        checkpoint: Option<PathBuf>,
    },
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// True for errors the CLI reports with the configuration exit code.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::InvalidArgument(_) | Error::Shape(_) | Error::Format { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
