//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("collection is empty")]
    EmptyCollection,

    #[error("invalid index artifact: {0}")]
    InvalidIndex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("embedding provider unavailable after {completed} items: {reason}")]
    ProviderUnavailable { completed: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("provider mismatch: index built with `{index}` (dim {index_dim}), query provider `{provider}` (dim {provider_dim})")]
    ProviderMismatch {
        index: String,
        index_dim: usize,
        provider: String,
        provider_dim: usize,
    },

    #[error("gold passages missing from collection: {0:?}")]
    GoldMissingFromCollection(Vec<String>),

    #[error("no ranked lists to fuse")]
    EmptyInput,

    #[error("generator returned an empty response")]
    EmptyResponse,

    #[error("no script entry for kind={kind} fingerprint={fingerprint:?} attempt={attempt}")]
    MissingScriptEntry {
        kind: String,
        fingerprint: String,
        attempt: u32,
    },

    #[error("malformed trajectory: {0}")]
    MalformedTrajectory(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("config key `{key}`: {reason}")]
    TypeMismatch { key: String, reason: String },

    #[error("missing required config key `{0}`")]
    MissingRequired(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn provider(completed: usize, reason: impl Into<String>) -> Self {
        Error::ProviderUnavailable {
            completed,
            reason: reason.into(),
        }
    }

    /// True for failures originating at a remote model or embedding endpoint.
    pub fn is_provider_error(&self) -> bool {
        matches!(
            self,
            Error::ProviderUnavailable { .. }
                | Error::EmptyResponse
                | Error::MissingScriptEntry { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
