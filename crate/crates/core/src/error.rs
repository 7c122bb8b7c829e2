use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PflError> = std::result::Result<T, E>;

/// Manifest and dataset inconsistency classes. Each maps to a stable code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataErrorKind {
    MissingFile,
    LabelMaskContradiction,
    ShapeMismatch,
    Malformed,
}

impl DataErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            DataErrorKind::MissingFile => "E-MISSING",
            DataErrorKind::LabelMaskContradiction => "E-LABEL-MASK",
            DataErrorKind::ShapeMismatch => "E-SHAPE",
            DataErrorKind::Malformed => "E-MALFORMED",
        }
    }
}

#[derive(Debug, Error)]
pub enum PflError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("[{}] {message}", kind.code())]
    Data {
        kind: DataErrorKind,
        message: String,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PflError {
    pub fn config(msg: impl Into<String>) -> Self {
        PflError::Config(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        PflError::Argument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        PflError::Numeric(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        PflError::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn data(kind: DataErrorKind, msg: impl Into<String>) -> Self {
        PflError::Data {
            kind,
            message: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PflError::Io {
            path: path.into(),
            source,
        }
    }
}
