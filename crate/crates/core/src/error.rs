use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O failed on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("input contains no interactions")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {what} {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("user {user} has no item left to sample as a negative")]
    NegativesExhausted { user: usize },

    #[error("calibration data contains a single class")]
    SingleClass,

    #[error("score {score} is outside the calibrator's domain: {reason}")]
    ScoreDomain { score: f64, reason: &'static str },

    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },

    #[error("invalid probability {value} at position {position}")]
    InvalidProbability { position: usize, value: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("no evaluable users: every user has an empty relevant set")]
    NoEvaluableUsers,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
