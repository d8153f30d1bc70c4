use thiserror::Error;

/// Errors produced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{param}` out of domain: {detail}")]
    Domain { param: &'static str, detail: String },

    #[error("infeasible schedule: target ratio {target} must exceed margin {margin}")]
    InfeasibleSchedule { target: f64, margin: f64 },

    #[error("index {index} out of range 0..{len}")]
    Index { index: usize, len: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("epoch sequencing: expected epoch {expected}, got {got}")]
    Sequencing { expected: usize, got: usize },

    #[error(
        "budget invariant violated at epoch {epoch}: prefix sum {prefix_sum} exceeds bound {bound}"
    )]
    BudgetViolation {
        epoch: usize,
        prefix_sum: usize,
        bound: f64,
    },

    #[error("ledger has no entries")]
    EmptyLedger,

    #[error("covariance needs at least 2 samples, got {0}")]
    DegenerateCovariance(usize),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("run aborted at epoch {epoch}: {source}")]
    Training {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(param: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain {
        param,
        detail: detail.into(),
    }
}
