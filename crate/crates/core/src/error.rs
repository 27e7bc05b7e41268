use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite reward at index {index}")]
    NonFiniteReward { index: usize },

    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("extended step limit is undefined for gamma = 1; use the true finite horizon instead")]
    UndiscountedStepLimit,

    #[error("tolerance {tau} violates the restriction tau <= r_max / (1 - gamma) = {bound}")]
    ToleranceTooLarge { tau: f64, bound: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset file: {0}")]
    DatasetFormat(String),

    #[error("unknown environment id `{0}`")]
    UnknownEnv(String),

    #[error("operation requires the linquad environment, got `{0}`")]
    NotLinQuad(String),

    #[error("regime: {0}")]
    Regime(String),

    #[error("config: {0}")]
    Config(String),

    #[error("expert calibration target {target:.4} unreachable; attainable returns span [{lo:.4}, {hi:.4}]")]
    CalibrationUnreachable { target: f64, lo: f64, hi: f64 },

    #[error("report: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
