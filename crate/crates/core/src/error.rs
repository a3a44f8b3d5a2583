use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LclError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LclError {
    #[error("shape error: {0}")]
    Shape(String),

    /// A caller broke an operation's precondition (malformed LCC, non-scalar loss, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("batch norm `{0}` has no running statistics; run at least one training step first")]
    UninitializedStats(String),

    #[error("dataset has {available} usable categories but {required} are required")]
    InsufficientCategories { available: usize, required: usize },

    #[error("category `{category}` has {available} samples but {required} are required")]
    InsufficientSamples {
        category: String,
        available: usize,
        required: usize,
    },

    #[error("dataset at {0} contains no images")]
    EmptyDataset(PathBuf),

    #[error("cannot ingest {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("non-finite value at step {step}: {message}")]
    NonFinite { step: u64, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl LclError {
    pub fn shape(msg: impl Into<String>) -> Self {
        LclError::Shape(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        LclError::Contract(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        LclError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        LclError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end:
    /// 2 config, 3 data, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            LclError::Config { .. }
            | LclError::Shape(_)
            | LclError::Contract(_)
            | LclError::Checkpoint(_)
            | LclError::Json { .. } => 2,
            LclError::InsufficientCategories { .. }
            | LclError::InsufficientSamples { .. }
            | LclError::EmptyDataset(_)
            | LclError::Ingest { .. }
            | LclError::Protocol(_)
            | LclError::Io { .. } => 3,
            LclError::NonFinite { .. } | LclError::UninitializedStats(_) => 4,
        }
    }
}
