use std::io;
use std::path::Path;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate image ids: {0}")]
    DuplicateIds(String),

    #[error("detector protocol error: {0}")]
    Protocol(String),

    #[error("detection failed: {0}")]
    Detection(String),

    #[error("cannot decode image: {0}")]
    Decode(String),

    #[error("generation failed: {0}")]
    Generation(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("detector process failed: {0}")]
    Subprocess(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn io_at(path: &Path, source: io::Error) -> Self {
        Error::io(path.display().to_string(), source)
    }

    /// True for failures of the environment (filesystem, subprocess) rather
    /// than of the data handed in.
    pub fn is_environmental(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Subprocess(_))
    }
}
