use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the decomposition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Well-formed input that violates a data invariant (duplicates, empty input, ...).
    #[error("data error: {0}")]
    Data(String),

    #[error("model format error: {0}")]
    Format(String),

    /// A parameter left the finite range during an update.
    #[error("numeric divergence: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    /// Mismatched shapes between internal buffers. Indicates a bug.
    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
