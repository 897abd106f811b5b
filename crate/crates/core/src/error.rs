use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time {t} outside the valid interval [{min}, {max}]")]
    OutOfRange { t: f64, min: f64, max: f64 },

    #[error("fields live on different grids ({left} vs {right})")]
    GridMismatch { left: String, right: String },

    #[error("CFL guard violated at t={t}: courant number {courant:.4} exceeds {limit}")]
    CflViolation { t: f64, courant: f64, limit: f64 },

    #[error("non-finite state detected; last valid time {last_valid_time}")]
    NonFinite { last_valid_time: f64 },

    #[error("noise coefficient overflow at t={t}: |exponent| = {exponent:.3} > {limit}")]
    CoefficientOverflow { t: f64, exponent: f64, limit: f64 },

    #[error("condition {condition} is not supported by diffusion variant {variant}")]
    UnsupportedCondition { condition: String, variant: String },

    #[error("transformed state mode mismatch: expected {expected}, found {found}")]
    ModeMismatch { expected: String, found: String },

    #[error("non-convergent quadrature: {0}")]
    NonConvergent(String),

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("incomplete energy ledger: {0}")]
    IncompleteLedger(String),

    #[error("ratio undefined: {0}")]
    Undefined(String),

    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
