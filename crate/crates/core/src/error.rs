use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("empty training corpus")]
    EmptyTrainingCorpus,

    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("duplicate key {doc_id}:{line_index}")]
    DuplicateKey { doc_id: String, line_index: usize },

    #[error("missing external scores for {count} line(s), first keys: {first:?}")]
    MissingKeys { count: usize, first: Vec<String> },

    #[error("degenerate calibration: no filter reduces perplexity")]
    DegenerateCalibration,

    #[error("weights sum to zero")]
    ZeroWeights,

    #[error("invalid weights file field `{field}`: {message}")]
    InvalidWeights { field: String, message: String },

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error("pruning would empty corpus")]
    EmptyPrune,

    #[error("{count} id(s) differ between scores and corpus, first: {first:?}")]
    IdMismatch { count: usize, first: Vec<String> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad computation inputs rather than bad files
    /// or arguments. The CLI maps these to exit code 3.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::DegenerateCalibration | Error::ZeroWeights)
    }
}
