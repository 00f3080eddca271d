use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("missing constant `{0}`")]
    MissingConstant(&'static str),
    #[error("enumerating C({n}, {b}) = {count} batches exceeds the cap of {cap}")]
    EnumerationTooLarge { n: usize, b: usize, count: f64, cap: usize },
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("point outside the truncation ball: {0}")]
    Domain(String),
    #[error("discretization too coarse: row {row} deviates from 1 by {deviation:.3e}")]
    DiscretizationTooCoarse { row: usize, deviation: f64 },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("quadrature domain too small: {0}")]
    DomainTooSmall(String),
    #[error("fixed-point iteration did not converge after {0} rounds")]
    NoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
