use thiserror::Error;

/// Errors raised by the tomography toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TomoError {
    #[error("singular covariance matrix (det = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid detection model: {0}")]
    InvalidDetection(String),

    #[error("invalid angle protocol: {0}")]
    InvalidProtocol(String),

    #[error("ragged dataset: per-angle sample counts differ ({min} vs {max})")]
    RaggedDataset { min: usize, max: usize },

    #[error("underdetermined: {distinct} distinct angles modulo pi, need at least 3")]
    Underdetermined { distinct: usize },

    #[error("maximum likelihood did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("too few samples: got {got}, need at least {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("degenerate variance {0:e}")]
    DegenerateVariance(f64),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TomoError {
    fn from(e: std::io::Error) -> Self {
        TomoError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, TomoError>;
