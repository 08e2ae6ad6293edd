use std::path::PathBuf;

/// Errors produced anywhere in the core crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("degenerate vector: {0}")]
    Degenerate(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unparseable output: {message} (raw payload: {raw:?})")]
    Format { message: String, raw: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("client error: {message}")]
    Client { message: String, retryable: bool },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for transport failures worth retrying.
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Client { retryable: true, .. })
    }
}
