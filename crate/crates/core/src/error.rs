use std::path::PathBuf;

use thiserror::Error;

use crate::data::Triple;
use crate::geometry3d::OperatorKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("reflection normal has norm {norm:e}, too small to normalize")]
    DegenerateReflection { norm: f64 },

    #[error("{kind:?} expects {expected} parameters, got {got}")]
    ParameterCount {
        kind: OperatorKind,
        expected: usize,
        got: usize,
    },

    #[error("operator chain expects {expected} parameters, got {got}")]
    ChainParameterCount { expected: usize, got: usize },

    #[error("cannot compose an empty operator chain")]
    EmptyChain,

    #[error("invalid variant: {0}")]
    InvalidVariant(String),

    #[error("variant syntax error at position {position}: {message}")]
    VariantSyntax { position: usize, message: String },

    #[error("embedding dimension {0} must be a positive multiple of 3")]
    Dimension(usize),

    #[error("{what} id {id} out of range (size {size})")]
    IdOutOfRange { what: &'static str, id: usize, size: usize },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("non-finite loss on triple {triple:?}")]
    NonFiniteLoss { triple: Triple },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("rank fusion error: {0}")]
    Fusion(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for failures caused by numerical breakdown rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. } | Error::DegenerateReflection { .. })
    }
}
