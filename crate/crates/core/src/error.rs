use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine.
///
/// Every variant renders as a single line so the CLI can print it as a
/// machine-parsable error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("data error: patient {patient}: {rule}")]
    Data { patient: String, rule: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error in {block}: {message}")]
    Numeric { block: String, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short stable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Data { .. } => "data",
            Error::Contract(_) => "contract",
            Error::Numeric { .. } => "numeric",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }

    pub(crate) fn data(patient: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Data {
            patient: patient.into(),
            rule: rule.into(),
        }
    }

    pub(crate) fn numeric(block: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numeric {
            block: block.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
