//! Error type shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix has no observed entries")]
    EmptyMask,

    #[error("empty held-out set")]
    EmptyHoldout,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A probability collapsed to 0/1 (or an input was already non-finite)
    /// and produced a non-finite objective or gradient.
    #[error("numerical domain error: {0}")]
    NumericalDomain(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
