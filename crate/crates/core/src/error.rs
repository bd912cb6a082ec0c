use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("unsupported strategy for this analysis: {0}")]
    Unsupported(String),

    #[error("non-finite acceleration for vehicle {vehicle} at t={time:.3}s ({detail})")]
    NonFinite { vehicle: usize, time: f64, detail: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("schema check failed for {file}: {reason}")]
    Schema { file: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
