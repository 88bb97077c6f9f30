use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record could not be parsed. `line` is 1-based.
    #[error("{file}:{line}: malformed record: {field}: {message}")]
    Parse {
        file: String,
        line: usize,
        field: String,
        message: String,
    },

    /// A record parsed but violates a schema invariant.
    #[error("{file}:{line}: {message}")]
    Validation {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Caller broke an operation's precondition (shape mismatch, non-finite input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("synset {0} has no encodable language segment")]
    EmptySequence(String),

    #[error("checkpoint refused: {0}")]
    Checkpoint(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        file: impl Into<String>,
        line: usize,
        field: impl Into<String>,
        message: impl ToString,
    ) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn validation(file: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Validation {
            file: file.into(),
            line,
            message: message.into(),
        }
    }
}
