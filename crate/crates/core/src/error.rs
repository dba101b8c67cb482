use thiserror::Error;

/// Every failure surfaced by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("label {0} outside {{-1, +1}} for a logistic loss")]
    LabelDomain(f64),

    #[error("step size {eta} outside (0, {bound}]")]
    StepSize { eta: f64, bound: f64 },

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite iterate at inner step {t} of outer round {k}")]
    Divergence { k: usize, t: usize },

    #[error("sample stream exhausted after {0} draws")]
    StreamExhausted(u64),

    #[error("empirical covariance is rank deficient (min eigenvalue {min_eig:e})")]
    RankDeficient { min_eig: f64 },

    #[error("solver stopped after {iterations} iterations with gradient norm {grad_norm:e}")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("evaluation budget must be positive for a Monte-Carlo risk")]
    EvaluationBudget,

    #[error("oracle dimension {0} exceeds the cap of {cap}", cap = crate::oracle::MAX_ORACLE_DIM)]
    OracleDimension(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter { name, reason: reason.into() }
}
