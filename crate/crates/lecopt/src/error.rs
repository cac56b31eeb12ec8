use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A value is outside the domain a formula or constructor accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated an API precondition (unsorted input, zero budget, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A distribution or transition model failed validation.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    /// A query or plan names a relation the catalog does not declare.
    #[error("{context}: unknown relation `{name}`")]
    UnknownRelation { context: String, name: String },

    /// A loaded file violates a type invariant.
    #[error("{path}: {msg}")]
    Validation { path: String, msg: String },

    /// The oracle declined because the problem exceeds its configured limits.
    #[error("refused: {0}")]
    Refused(String),
}

impl Error {
    /// Process exit code convention: 1 for validation/usage, 2 for refusals.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Refused(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
