use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the admissible region: {0}")]
    OutOfDomain(String),

    #[error("kernel singularity at coincident points")]
    CoincidentPoints,

    #[error("quadrature did not converge: value {value:e}, error estimate {error_estimate:e}")]
    NoConvergence { value: f64, error_estimate: f64 },

    #[error("integral diverges: {0}")]
    Divergent(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("grid too large: {cells} cells exceeds limit {limit}")]
    GridTooLarge { cells: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
