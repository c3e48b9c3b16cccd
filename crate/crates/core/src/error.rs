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

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no metadata row for record `{0}`")]
    MissingMetadata(String),

    #[error("invalid metadata: {0}")]
    Metadata(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("record `{record_id}` unusable: {reason}")]
    Unusable { record_id: String, reason: String },

    #[error("sequence too short for {what}: need {needed} intervals, have {available}")]
    TooShort {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    #[error("invalid frequency band ({lo}, {hi}] Hz")]
    Band { lo: f64, hi: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite training loss at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{row}, seed {seed}: {source}")]
    Run {
        row: String,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Eval(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for data or configuration problems, 2 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite(_) | Error::Diverged { .. } => 2,
            Error::Fold { source, .. } | Error::Run { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
