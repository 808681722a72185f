use thiserror::Error;

use crate::records::ScoreKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed JSON: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Validation { line: usize, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("record {id}: missing score {key}")]
    MissingScore { id: String, key: ScoreKey },
    #[error("record {id}: entailment label required but not visible")]
    MissingLabel { id: String },
    #[error("record {id}: exact-match flag required but absent")]
    MissingExactMatch { id: String },
    #[error("invalid selector: {0}")]
    InvalidSelector(String),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("undefined risk: {0}")]
    UndefinedRisk(String),
    #[error("hypothesis not met: {0}")]
    HypothesisUnmet(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
