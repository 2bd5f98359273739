use thiserror::Error;

/// Invalid parameters or configuration input.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("n must be an even perfect square (n >= 4), got {0}")]
    NodeCount(usize),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("malformed value for `{key}`: `{value}`")]
    Malformed { key: String, value: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
}

impl ConfigError {
    /// Name of the offending key, when there is one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::NodeCount(_) => Some("n"),
            ConfigError::Invalid { key, .. } | ConfigError::Malformed { key, .. } => Some(key),
            ConfigError::UnknownKey(key) => Some(key),
            ConfigError::Syntax { .. } => None,
        }
    }
}

/// Failures of the exact chain computations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("torus side must be at least 2, got {0}")]
    Side(usize),
    #[error("state {state} outside the {states}-state chain")]
    State { state: usize, states: usize },
    #[error("hitting-time system is singular")]
    Singular,
    #[error("linear solve residual {residual:e} exceeds {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },
}

/// Failures of the analytic queueing bounds.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueueError {
    #[error("queue is unstable: utilisation {rho} >= 1")]
    Unstable { rho: f64 },
    #[error("invalid moment input: {0}")]
    Moments(String),
}

/// Failures of scaling estimation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("need at least 3 distinct n, got {0}")]
    TooFewRows(usize),
    #[error("non-positive value in column `{0}`")]
    NonPositive(&'static str),
}
