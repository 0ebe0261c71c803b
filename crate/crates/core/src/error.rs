use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("degenerate input in {op}: {detail}")]
    Degenerate { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("index error in {op}: {detail}")]
    Index { op: &'static str, detail: String },

    #[error("graph state error: {0}")]
    State(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("episode sampling infeasible: {0}")]
    SamplingInfeasible(String),

    #[error("metric undefined: {0}")]
    MetricUndefined(String),

    #[error("auxiliary selection failed: {0}")]
    Selection(String),

    #[error("adaptation diverged at step {step}: {detail}")]
    AdaptationDiverged { step: usize, detail: String },

    #[error("training diverged at meta-step {step}: {detail}")]
    TrainingDiverged { step: u64, detail: String },

    #[error("config error for key `{key}`: {detail}")]
    Config { key: String, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("output directory {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn degenerate(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Degenerate {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }
}
