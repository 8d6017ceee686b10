use std::path::PathBuf;

use crate::sim::ExperimentLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("gain matrix is rank deficient at y = {y} m (singular value ratio {ratio:.3e})")]
    RankDeficient { y: f64, ratio: f64 },

    #[error("normal matrix is singular (condition estimate {condition:.3e}); data not sufficiently exciting")]
    SingularNormalMatrix { condition: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("simulation diverged at t = {time} s (|y| = {position} m)")]
    Diverged {
        time: f64,
        position: f64,
        log: Box<ExperimentLog>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid(_) | Error::Config(_) => ErrorKind::Validation,
            Error::RankDeficient { .. }
            | Error::SingularNormalMatrix { .. }
            | Error::NonFinite(_)
            | Error::Diverged { .. } => ErrorKind::Numerical,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
