use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix exponential overflowed (norm of M*t = {norm:.3e})")]
    ExpOverflow { norm: f64 },

    #[error("eigensolver did not converge within {iterations} iterations")]
    EigenNonConvergence { iterations: usize },

    #[error("B*B^T is not positive definite (smallest eigenvalue {c:.3e})")]
    Assumption1Violation { c: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("noise increments are not available on this trajectory or accumulator")]
    OracleUnavailable,

    #[error("sample covariance is singular (smallest eigenvalue {min_eig:.3e})")]
    SingularCovariance { min_eig: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
