use thiserror::Error;

/// Error type shared across the toolkit.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("generation failure: {0}")]
    GenerationFailure(String),
    #[error("embedding infeasible: {0}")]
    EmbeddingInfeasible(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("estimation failure: {0}")]
    EstimationFailure(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
