use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure categories. Each maps to one process exit code in the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad shapes, hyperparameters, or missing classes.
    #[error("configuration error: {0}")]
    Config(String),

    /// An API was called out of contract (index out of range, empty batch, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Input files that parse but violate dataset or checkpoint invariants.
    #[error("validation error in {path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Non-finite gradients, parameters, or losses.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Attempt to write a frozen model.
    #[error("frozen model: {0}")]
    Frozen(&'static str),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 1 usage, 2 I/O or validation, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Validation { .. } | Error::Io { .. } => 2,
            Error::Numeric(_) | Error::Frozen(_) => 3,
        }
    }
}
