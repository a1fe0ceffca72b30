use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by kernel evaluation, inference and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or cannot meet its accuracy target.
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A numerical routine lost accuracy or failed to converge.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A linear system has no usable spectrum above the cutoff.
    #[error("singular system: {0}")]
    Singular(String),

    /// The learning-curve equations have no admissible solution.
    #[error("theory domain error: {0}")]
    Theory(String),

    /// A file does not follow the expected binary or text format.
    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
