//! Error type for the pipeline binary: wraps the core library errors
//! and adds manifest and report I/O failures.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("manifest validation: {0}")]
    Validation(String),

    #[error("{path}: csv error: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("no usable data: {0}")]
    EmptyData(String),

    #[error(transparent)]
    Core(#[from] skintrack_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: validation problems are distinguishable from
    /// other fatal errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
