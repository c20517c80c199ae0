use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("observation code {code} is not decodable at step {h}")]
    UnknownObservation { h: usize, code: usize },
    #[error("step {h} is out of range for horizon {horizon}")]
    StepOutOfRange { h: usize, horizon: usize },
    #[error("dataset for step {0} is empty")]
    EmptyDataset(usize),
    #[error("every candidate assigns zero likelihood at step {0}")]
    LikelihoodDegenerate(usize),
    #[error("dataset task index {index} exceeds task count {tasks}")]
    MismatchedTasks { index: usize, tasks: usize },
    #[error("learned model has empty support at step {0}")]
    PlanningSupportEmpty(usize),
    #[error("feature dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("span coefficients were not recorded for this suite")]
    CoefficientsAbsent,
    #[error("operation unsupported in noisy emission mode")]
    UnsupportedInNoisyMode,
    #[error("access to source task {0} was revoked")]
    AccessRevoked(usize),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
