use thiserror::Error;

/// Errors raised anywhere in the inference toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("budget exhausted: requested {requested} units with {remaining} remaining")]
    BudgetExhausted { requested: u64, remaining: u64 },

    #[error("hazard overflow: {0}")]
    HazardOverflow(String),

    #[error("time {t} outside [0, {end}]")]
    TimeOutOfRange { t: f64, end: f64 },

    #[error("state space of {states} states exceeds cap of {cap}")]
    StateSpaceTooLarge { states: usize, cap: usize },

    #[error("truncation lost {lost:e} of the probability mass (threshold {threshold:e})")]
    TruncationLoss { lost: f64, threshold: f64 },

    #[error("uniformization did not reach tolerance {tol:e} within {cap} terms")]
    UniformizationCap { tol: f64, cap: usize },

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("degenerate population: {0}")]
    Degenerate(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("particle tuning failed after spending {spent} units: {reason}")]
    Tuning { spent: u64, reason: String },

    #[error("no particles accepted after {attempts} attempts ({spent} units spent)")]
    NoAcceptances { attempts: u64, spent: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
