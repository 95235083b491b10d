use thiserror::Error;

/// Errors raised by the library layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoheError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("numerical divergence at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("initial correlation {0} is an excluded point of the closed-form solution")]
    ExcludedInitialPoint(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("invalid fit data: {0}")]
    InvalidFit(String),

    #[error("snapshot decode error: {0}")]
    Snapshot(String),
}

pub type Result<T> = std::result::Result<T, LoheError>;
