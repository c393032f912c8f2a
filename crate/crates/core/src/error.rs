use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the pipeline.
///
/// Every variant maps onto one of three failure classes (see [`ErrorKind`]),
/// which the command-line front end turns into an exit code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("tensor invariant violated at week {t}, entry ({i}, {j}): {reason}")]
    Invariant {
        t: usize,
        i: usize,
        j: usize,
        reason: String,
    },

    #[error("unknown figure: {0}")]
    UnknownFigure(String),

    #[error("no key figures passed the selection thresholds")]
    NoKeyFigures,

    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: &'static str, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } | Error::Parse { .. } => ErrorKind::Io,
            Error::Numerical { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn numerical(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Numerical {
            stage,
            message: message.into(),
        }
    }
}
