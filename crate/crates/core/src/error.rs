use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular linear system at point {point:?}")]
    Singular { point: Vec<Complex64> },
    #[error("integration failed at t = {time}: {reason}")]
    Integration { time: f64, reason: String },
    #[error("unknown catalog map `{0}`")]
    UnknownMap(String),
    #[error("invalid description: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
