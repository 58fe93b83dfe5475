use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong inside the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("tokenization level mismatch: {0:?} vs {1:?}")]
    LevelMismatch(crate::textproc::TokenizationLevel, crate::textproc::TokenizationLevel),

    #[error("invalid token {0:?}: tokens must be non-empty and free of whitespace")]
    InvalidToken(String),

    #[error("reference is empty; WER is undefined")]
    EmptyReference,

    #[error("at least one reference segment is required")]
    NoReferences,

    #[error("document mismatch: system output has {found:?}, reference is {expected:?}")]
    DocumentMismatch { expected: String, found: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{0}")]
    Invalid(String),

    #[error("length mismatch: {0} hypotheses vs {1} references")]
    LengthMismatch(usize, usize),

    #[error("system {0:?} has not been resegmented; run resegmentation first")]
    NotResegmented(String),

    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
