use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed header, expected `{expected}`, found `{found}`")]
    MalformedHeader {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("auditing set empty: no realizable targets")]
    EmptyAuditingSet,

    #[error("scope index {index} out of bounds for sequence of length {len}")]
    ScopeOutOfBounds { index: usize, len: usize },

    #[error("target `{target_id}`: complement has {available} residues, need {needed}")]
    ComplementTooSmall {
        target_id: String,
        available: usize,
        needed: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("AUROC undefined: labels contain a single class")]
    AurocUndefined,

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("class imbalance for pair `{pair_id}`: {mech} mechanistic vs {spur} spurious responses")]
    ClassImbalance {
        pair_id: String,
        mech: usize,
        spur: usize,
    },

    #[error("unknown oracle `{0}`")]
    UnknownOracle(String),

    #[error("scorer `{model}`: {message}")]
    Protocol { model: String, message: String },

    #[error("scorer `{model}`: no score returned for id `{id}`")]
    MissingScore { model: String, id: String },

    #[error("scorer `{model}`: non-finite score for id `{id}`")]
    NonFiniteScore { model: String, id: String },

    #[error("scorer `{model}`: error for id `{id}`: {message}")]
    ScorerReported {
        model: String,
        id: String,
        message: String,
    },

    #[error("scorer `{model}`: transport failure after {attempts} attempts: {message}")]
    Transport {
        model: String,
        attempts: usize,
        message: String,
    },

    #[error("mismatched metric sets across runs: {0}")]
    MismatchedRuns(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
