use std::path::PathBuf;

use thiserror::Error;

/// Broad failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    InputData,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("structural error at id {id}: {message}")]
    Structural { id: usize, message: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("unknown feature '{0}'")]
    UnknownFeature(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced at layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch}: validation loss is not finite")]
    Diverged { epoch: usize },

    #[error("degenerate kernel bandwidth: all candidate/reference distances are zero")]
    DegenerateBandwidth,

    #[error("no candidates remain after applying a {buffer_m} m station buffer")]
    EmptyDomain { buffer_m: f64 },

    #[error("silhouette score is undefined: {0}")]
    UndefinedScore(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnknownFeature(_) => ErrorKind::Config,
            Error::Structural { .. }
            | Error::Parse { .. }
            | Error::Shape(_)
            | Error::EmptyDomain { .. }
            | Error::Io { .. }
            | Error::Format { .. } => ErrorKind::InputData,
            Error::NonFinite { .. }
            | Error::Diverged { .. }
            | Error::DegenerateBandwidth
            | Error::UndefinedScore(_) => ErrorKind::Numeric,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
