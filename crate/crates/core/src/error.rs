use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),

    #[error("invalid initial state: {0}")]
    InvalidInit(String),

    #[error("sampler diverged in block `{block}` at iteration {iteration}")]
    SamplerDivergence { block: String, iteration: usize },

    #[error("all importance weights are -inf")]
    DegenerateWeights,

    #[error("moment does not exist: {0}")]
    MomentDoesNotExist(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("every replication failed for delta = {delta}, estimator = {estimator}")]
    EmptyCell { delta: f64, estimator: String },

    #[error("{failed} of {total} replications failed (limit is 1%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
