use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the estimation stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: column `{column}` not found")]
    MissingColumn { column: String },
    #[error("validation error at row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("validation error: treatment varies within individual `{individual}`")]
    TreatmentVaries { individual: String },
    #[error("validation error: duplicate (individual `{individual}`, period {period})")]
    DuplicateObservation { individual: String, period: i64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("index {index} out of bounds for {len} columns")]
    OutOfBounds { index: usize, len: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("standardized difference undefined: zero pooled variance with unequal means")]
    UndefinedSd,
    #[error("degenerate group {group}: {message}")]
    DegenerateGroup { group: String, message: String },
    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),
    #[error("rank deficient design: {0}")]
    RankDeficient(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the pipeline stage it surfaced from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
