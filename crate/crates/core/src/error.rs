//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument for {context}: {message}")]
    InvalidArgument { context: &'static str, message: String },

    #[error("non-finite value in {context}{}", detail.as_deref().map(|d| format!(" ({d})")).unwrap_or_default())]
    NonFinite {
        context: &'static str,
        detail: Option<String>,
    },

    #[error("non-finite gradient for parameter tensor `{name}`")]
    NonFiniteGradient { name: String },

    #[error("training aborted at iteration {iteration}: {message}{}", last_checkpoint.as_deref().map(|p| format!("; last good checkpoint: {p}")).unwrap_or_default())]
    TrainingAborted {
        iteration: u64,
        message: String,
        last_checkpoint: Option<String>,
    },

    #[error("dataset is empty: {0}")]
    EmptyDataset(String),

    #[error("rate target too small: {0}")]
    RateTooSmall(String),

    #[error("corrupt bitstream in {section}: {message}")]
    CorruptStream { section: &'static str, message: String },

    #[error("premature end of coded data in {section} (not at a bitplane boundary)")]
    PrematureEnd { section: &'static str },

    #[error("unsupported container version {found} (decoder supports {supported})")]
    UnsupportedVersion { found: u8, supported: u8 },

    #[error("malformed {format} data: {message}")]
    Format { format: &'static str, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.into(),
            actual: actual.into(),
        }
    }

    pub(crate) fn invalid(context: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            context,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
