use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// The variants are grouped by [`ErrorClass`] so that front-ends can map
/// them onto stable exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("drift amplitude {sup} violates the bound {bound} (|b| must stay strictly below 1/2d)")]
    Amplitude { sup: f64, bound: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("operation requires d = {expected}, got d = {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("iterative solve did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("expected a strictly positive solution, found {value:e} at index {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("denominator vanishes: all frequencies are multiples of 2*pi")]
    ZeroDenominator,

    #[error("potential V vanishes at transverse site {0}")]
    ZeroV(usize),

    #[error("no amplifying mode exists for dims {0:?}")]
    NoMode(Vec<usize>),

    #[error("counterexample search hit the amplitude floor {floor:e} without exceeding 1/2d")]
    SearchFailed { floor: f64 },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error("quadrature error estimate {estimate:e} exceeds {bound:e}")]
    Quadrature { estimate: f64, bound: f64 },

    #[error("routes disagree: {0}")]
    Disagreement(String),

    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Coarse classification used for exit codes and error tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Budget,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Amplitude { .. }
            | Error::Shape(_)
            | Error::Dimension { .. }
            | Error::ZeroV(_)
            | Error::Invalid(_) => ErrorClass::Validation,
            Error::Budget(_) => ErrorClass::Budget,
            Error::Singular(_)
            | Error::Convergence { .. }
            | Error::NonPositive { .. }
            | Error::ZeroDenominator
            | Error::NoMode(_)
            | Error::SearchFailed { .. }
            | Error::Quadrature { .. }
            | Error::Disagreement(_) => ErrorClass::Numerical,
        }
    }

    /// Short machine-readable tag, e.g. `singular`.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Amplitude { .. } => "amplitude",
            Error::Shape(_) => "shape",
            Error::Dimension { .. } => "dimension",
            Error::Singular(_) => "singular",
            Error::Convergence { .. } => "convergence",
            Error::NonPositive { .. } => "non_positive",
            Error::ZeroDenominator => "zero_denominator",
            Error::ZeroV(_) => "zero_v",
            Error::NoMode(_) => "no_mode",
            Error::SearchFailed { .. } => "search_failed",
            Error::Budget(_) => "budget",
            Error::Quadrature { .. } => "quadrature",
            Error::Disagreement(_) => "disagreement",
            Error::Invalid(_) => "invalid",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
