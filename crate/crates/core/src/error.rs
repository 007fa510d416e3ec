use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DclError>;

#[derive(Debug, Error)]
pub enum DclError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// A caller broke a documented precondition.
    #[error("contract violated: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("validation failed for {source_name}: {message}")]
    Validation { source_name: String, message: String },

    #[error("non-finite value in {component}")]
    NonFinite { component: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what} in {path}: {message}")]
    Parse {
        what: &'static str,
        path: PathBuf,
        message: String,
    },
}

impl DclError {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        DclError::Shape { op, left, right }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DclError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn validation(source_name: impl Into<String>, message: impl Into<String>) -> Self {
        DclError::Validation {
            source_name: source_name.into(),
            message: message.into(),
        }
    }

    /// Process exit status used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            DclError::Io { .. } => 4,
            DclError::Validation { .. } | DclError::Parse { .. } | DclError::Shape { .. } => 3,
            DclError::Config(_) => 2,
            DclError::Contract(_) | DclError::NonFinite { .. } => 1,
        }
    }
}
