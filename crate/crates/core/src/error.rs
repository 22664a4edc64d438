use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two roots of `psi(alpha) = q` coincide; the exponential-sum form of the
    /// scale function does not exist.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("value is infinite: {0}")]
    InfiniteValue(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("two-sided refraction did not terminate after {0} segments")]
    NonTermination(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
