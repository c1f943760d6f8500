use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller-supplied input violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// The scorer answered, but the exchange broke the wire contract.
    #[error("scorer protocol error: {0}")]
    Protocol(String),

    #[error("input of {tokens} tokens exceeds max_input_tokens {max_input_tokens}")]
    TooLong {
        tokens: usize,
        max_input_tokens: usize,
    },

    /// The scorer could not be reached (after retries).
    #[error("scorer connection error: {0}")]
    Connection(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn protocol(msg: impl Into<String>) -> Self {
        Error::Protocol(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the caller's data or arguments rather
    /// than the environment (files, network, scorer).
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_) | Error::Malformed { .. })
    }
}
