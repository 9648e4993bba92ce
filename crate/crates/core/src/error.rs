use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("input voltage {value} V exceeds the ±{limit} V read window")]
    InputOutOfRange { value: f64, limit: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("reminder map: {0}")]
    Map(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("plot: {0}")]
    Plot(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
