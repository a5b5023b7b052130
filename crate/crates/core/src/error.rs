use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by model construction, analysis and interconnection.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown port `{0}`")]
    UnknownPort(String),
    #[error("(sI - A) is near-singular at s = {s} (condition {cond:.3e}); closest eigenvalue of A is {eigenvalue}")]
    Singular {
        s: Complex64,
        eigenvalue: Complex64,
        cond: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;
