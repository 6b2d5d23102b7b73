use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("geometry fault: {0}")]
    Geometry(String),

    #[error("framing fault: {bits} bits is not a multiple of {bits_per_symbol}")]
    Framing { bits: usize, bits_per_symbol: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("protocol fault: {0}")]
    Protocol(String),

    #[error("infeasible transmission: {0}")]
    Infeasible(String),

    #[error("training fault: {0}")]
    Training(String),

    #[error("invalid scenario: {0}")]
    Config(String),

    #[error("calibration table: {0}")]
    Calibration(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }
}
