use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),
    #[error("priority undefined for sequence {0}: all cost terms are zero and the floor is zero")]
    UndefinedPriority(u32),
    #[error("no equilibrium in [{t_min}, {t_max}]: {reason}")]
    NoEquilibrium { t_min: f64, t_max: f64, reason: String },
    #[error("non-finite value from entropy response at T = {0}")]
    NonFiniteResponse(f64),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
