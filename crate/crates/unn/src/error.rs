//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by dataset handling, training, inference, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs does not hold (bad label, empty set, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A file could not be parsed; carries the offending location.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// A 1-D minimization has no finite stationary point.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A serialized file carries an unsupported schema version.
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    /// Bad command-line usage.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// A state the algorithm guarantees unreachable.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code for the CLI: 1 usage, 2 data/domain, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Io(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
