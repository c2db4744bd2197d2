use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate page_id `{0}`")]
    DuplicateId(String),

    #[error("dimension mismatch ({context}): expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("invalid record `{page_id}`: {reason}")]
    InvalidRecord { page_id: String, reason: String },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("missing {field} embedding for page `{page_id}`")]
    MissingEmbedding {
        page_id: String,
        field: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("training data has a single class: {0}")]
    SingleClass(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("topic `{0}` has no threshold set")]
    ThresholdUnset(String),

    #[error("bucket {0} has sampled pages but no relevance fraction")]
    MissingRelevance(usize),

    #[error("k = {k} out of range 1..={len}")]
    KOutOfRange { k: usize, len: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    /// True when the error stems from bad input or configuration rather than
    /// from the environment or a numerical failure. A failed pipeline stage is
    /// a runtime failure whatever its cause.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::Diverged { .. } | Error::Stage { .. }
        )
    }
}
