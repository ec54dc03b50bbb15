use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },

    #[error("rejected {} row(s), first at row {}: {}", .rows.len(), .rows[0].0, .rows[0].1)]
    RejectedRows { rows: Vec<(usize, String)> },

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("quota exceeded after {scored} scored tweets")]
    QuotaExceeded { scored: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("entropy {0} outside [0, ln 8]")]
    EntropyOutOfRange(f64),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("class {0} absent from training split")]
    ClassMissingFromTrain(bool),

    #[error("unknown profile {0}")]
    UnknownProfile(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config hash mismatch for {path}: expected {expected}, found {found}")]
    ProvenanceMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },

    #[error("working directory locked by {0}")]
    Locked(PathBuf),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cache encoding: {0}")]
    Encoding(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit status: one code per pipeline stage, otherwise one per
    /// error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { stage, .. } => match *stage {
                "ingest" => 10,
                "score" => 11,
                "topics" => 12,
                "group" => 13,
                "metrics" => 14,
                "detect" => 15,
                "classify" => 16,
                "report" => 17,
                _ => 1,
            },
            Error::InvalidArgument(_) | Error::EntropyOutOfRange(_) | Error::UnknownProfile(_) => 2,
            Error::Io { .. } => 3,
            Error::Schema { .. }
            | Error::InvalidRow { .. }
            | Error::RejectedRows { .. }
            | Error::Json(_)
            | Error::Encoding(_) => 4,
            Error::Locked(_) => 5,
            Error::ProvenanceMismatch { .. } => 6,
            Error::BackendUnavailable(_) | Error::QuotaExceeded { .. } => 7,
            Error::EmptyInput(_) | Error::SingleClass | Error::ClassMissingFromTrain(_) => 8,
        }
    }
}
