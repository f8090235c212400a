use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the toolkit.
///
/// The variants line up with the CLI exit codes: domain and configuration
/// problems map to 2, ingestion and I/O to 3, solver failures to 4.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A mechanism or experiment was configured inconsistently.
    #[error("configuration error: {0}")]
    Config(String),

    /// A root finder could not bracket or converge.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// The requested target value is not attainable.
    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("ingestion error in {path} at line {line}: {message}")]
    Ingestion {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Config(_) | Error::Json(_) => 2,
            Error::Ingestion { .. } | Error::Io { .. } => 3,
            Error::Convergence(_) | Error::NoSolution(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
