use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed parameters or arguments.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// FGM coefficient matrix fails the vertex condition.
    #[error("inadmissible FGM matrix: density at vertex {witness:?} is {value}")]
    InadmissibleFgm { witness: Vec<i8>, value: f64 },

    /// The input is well formed but a modelling assumption does not hold
    /// (for example a density requested from a singular copula).
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// A class-membership diagnostic was asked for a law outside its domain.
    #[error("class precondition failed: {0}")]
    Precondition(String),

    /// Model/quantity combination that cannot be simulated.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Configured work or memory cap exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
