use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("{solver} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("operator is not single-valued: {0}")]
    NotSingleValued(&'static str),

    #[error("iterate norm {norm:e} exceeded divergence guard at n = {n}")]
    Diverged { n: usize, norm: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}
