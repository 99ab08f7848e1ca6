//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input data (ragged CSV rows, empty files, quoting, bad cells).
    #[error("data error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data { msg: String, line: Option<usize> },

    /// Two datasets (or a dataset and a persisted artifact) disagree on schema.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// Matrix/vector dimensions do not agree.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value violates a documented invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A computation produced a non-finite value or hit a numeric guard.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Corrupt or incompatible persisted artifact.
    #[error("persistence error: {0}")]
    Persist(String),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data {
            msg: msg.into(),
            line: None,
        }
    }

    pub fn data_at(msg: impl Into<String>, line: usize) -> Self {
        Error::Data {
            msg: msg.into(),
            line: Some(line),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
