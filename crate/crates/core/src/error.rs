use thiserror::Error;

/// Errors surfaced by archives, emitters, domains, and the scheduler.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("repair failed: {0}")]
    RepairFailed(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("evaluation failed at params {params:?}: {source}")]
    Evaluation { source: Box<Error>, params: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
