use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gain undefined: seed performance is zero")]
    UndefinedGain,

    #[error("journal corrupted at {path}: {reason}")]
    JournalCorrupt { path: PathBuf, reason: String },

    #[error("journal at {0}: no run_started event")]
    NoRunStarted(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("template `{0}` not found")]
    TemplateNotFound(String),

    #[error("template `{template}` has no binding for placeholder {{{placeholder}}}")]
    MissingBinding { template: String, placeholder: String },

    #[error("provider error: {0}")]
    Provider(String),

    #[error("replay cache miss for prompt digest {0}")]
    CacheMiss(String),

    #[error("mock script has no entry matching the request (digest {0})")]
    MockExhausted(String),

    #[error("probabilities do not sum to 1 (sum = {0})")]
    NotNormalized(f64),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("instance parse error in {path} line {line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("unsupported edge weight type `{0}`")]
    UnsupportedEdgeWeight(String),

    #[error("exact oracle refuses n = {0} (limit 15)")]
    OracleTooLarge(usize),

    #[error("worker configuration: {0}")]
    WorkerConfig(String),

    #[error("duplicate builtin heuristic `{0}`")]
    DuplicateBuiltin(String),

    #[error("search aborted: {0}")]
    Aborted(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
