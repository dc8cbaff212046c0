//! Error type shared across the engine.

use thiserror::Error;

/// All failure modes surfaced by the library.
///
/// `Parse` and `Io` are input errors (CLI exit code 2); `Numerical` signals a
/// solver breakdown (CLI exit code 1). The remaining variants are contract
/// violations on in-memory calls.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient correspondences: have {have}, need {need}")]
    InsufficientCorrespondences { have: usize, need: usize },

    /// RANSAC exhausted its iteration budget without a model reaching the
    /// minimum inlier count. The pair is unconnectable, not a fatal error.
    #[error("no model: {0}")]
    NoModel(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn parse(path: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by malformed input rather than engine state.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Io { .. } | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
