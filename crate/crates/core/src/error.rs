use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rho >= 1 (rho = {0}); the system is unstable")]
    Unstable(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid phase-type representation: {0}")]
    InvalidPh(String),

    #[error("{0} has no finite phase-type representation")]
    NoPhRepresentation(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("integration step too large: {0}; retry with a smaller step")]
    StepTooLarge(String),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("truncation level exhausted: {0}")]
    Truncation(String),

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error("no samples")]
    NoSamples,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
