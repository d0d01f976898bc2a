use thiserror::Error;

/// Errors raised by the solver, its estimators, and the reference oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid network specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported derivative request: {0}")]
    UnsupportedDerivative(String),

    #[error("architecture `{0}` does not induce a Gaussian mixture")]
    NotGaussian(&'static str),

    #[error("degenerate bandwidth at node {0}")]
    DegenerateBandwidth(usize),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("evaluation bundle is missing `{0}`")]
    MissingDerivative(&'static str),

    #[error("problem mismatch: {0}")]
    ProblemMismatch(String),

    #[error("non-positive importance weight at sample {0}")]
    InvalidWeight(usize),

    #[error("regularized Galerkin matrix is not positive definite; raise lambda")]
    Factorization,

    #[error("step size {h:e} fell below the minimum {min:e} at t = {t}")]
    StepUnderflow { t: f64, h: f64, min: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Whether the error comes from the numerics rather than from the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBandwidth(_)
                | Error::InvalidWeight(_)
                | Error::Factorization
                | Error::StepUnderflow { .. }
                | Error::NonFinite(_)
                | Error::ZeroDenominator(_)
        )
    }
}
