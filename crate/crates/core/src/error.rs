use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the toolkit.
///
/// Every variant maps to a stable, machine-parseable [`Error::class`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: usize,
        field: String,
        message: String,
    },
    #[error("duplicate sample_id `{0}`")]
    Duplicate(String),
    #[error("sample `{sample}`: {message}")]
    Validation { sample: String, message: String },
    #[error("bad file format: {0}")]
    Format(String),
    #[error("corrupt file: {0}")]
    Corruption(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("encoder `{encoder}` failed on sample `{sample}`: {message}")]
    Encoder {
        encoder: String,
        sample: String,
        message: String,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("cannot condition on x = {x}: P(x) = 0")]
    Conditioning { x: usize },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("unknown context `{0}`")]
    UnknownContext(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// Stable snake_case identifier for the error kind.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Duplicate(_) => "duplicate",
            Error::Validation { .. } => "validation",
            Error::Format(_) => "format",
            Error::Corruption(_) => "corruption",
            Error::Argument(_) => "argument",
            Error::Encoder { .. } => "encoder",
            Error::Shape(_) => "shape",
            Error::Numeric(_) => "numeric",
            Error::Conditioning { .. } => "conditioning",
            Error::Divergence { .. } => "divergence",
            Error::Config(_) => "config",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::UnknownContext(_) => "unknown_context",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
