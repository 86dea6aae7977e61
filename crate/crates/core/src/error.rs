use std::path::PathBuf;

use thiserror::Error;

use crate::autodiff::AutodiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed or inconsistent input data.
    #[error("{0}")]
    Data(String),
    /// Invalid configuration or argument combination.
    #[error("{0}")]
    Config(String),
    /// NaN/Inf during training or a failed numeric precondition.
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Coarse classification used by the CLI to choose an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Usage,
            Error::Io { .. } | Error::Data(_) => ErrorKind::Data,
            Error::Numeric(_) => ErrorKind::Numeric,
            Error::Autodiff(AutodiffError::NonFinite(_)) => ErrorKind::Numeric,
            Error::Autodiff(_) => ErrorKind::Data,
        }
    }
}
