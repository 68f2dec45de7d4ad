use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data is malformed or inconsistent.
    #[error("invalid data: {0}")]
    Data(String),

    /// A CSV row could not be parsed or validated.
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },

    #[error("exposure stream is not sorted by time (event {index} at t={t_h} h)")]
    UnsortedStream { index: usize, t_h: f64 },

    #[error("node id {id} out of range for population {n_nodes}")]
    NodeOutOfRange { id: usize, n_nodes: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// A requested target cannot be reached (e.g. a reliability above what the
    /// simulation horizon delivers).
    #[error("unattainable: {message} (achieved maximum {achieved})")]
    Unattainable { message: String, achieved: f64 },

    #[error("trial {trial_id}: {source}")]
    Trial {
        trial_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Infeasible,
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Json(_) => ErrorKind::Config,
            Error::Unattainable { .. } => ErrorKind::Infeasible,
            Error::Trial { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
