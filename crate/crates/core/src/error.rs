use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dimension mismatch at row {row}: {detail}")]
    DimensionMismatch { row: usize, detail: String },

    #[error("outcome out of range at row {row}: outcome {outcome} = {value}")]
    OutcomeOutOfRange { row: usize, outcome: usize, value: f64 },

    #[error("action out of range at row {row}: {action} not in 1..={num_actions}")]
    ActionOutOfRange { row: usize, action: usize, num_actions: usize },

    #[error("positivity violated at row {row}: e({action}, x) = {value} < floor {floor}")]
    PositivityViolated { row: usize, action: usize, value: f64, floor: f64 },

    #[error("invalid propensity model: {0}")]
    InvalidPropensity(String),

    #[error("covariate dimension mismatch: expected {expected}, got {got}")]
    CovariateDimension { expected: usize, got: usize },

    #[error("invalid safety spec: {0}")]
    InvalidSpec(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty training cell for fold {fold}, action {action}")]
    EmptyCell { fold: usize, action: usize },

    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),

    #[error("degenerate covariance: every coordinate has zero variance")]
    DegenerateCovariance,

    #[error("sensitivity {given} is below the required floor {floor}")]
    SensitivityBelowFloor { given: f64, floor: f64 },

    #[error("empty policy class")]
    EmptyPolicyClass,

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
