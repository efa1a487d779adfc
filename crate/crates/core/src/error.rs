use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input outside the domain where an object is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// A non-finite or otherwise unusable number appeared.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// Linear dependence in a Ritz or generator basis.
    #[error("basis dependence: {0}")]
    BasisDependence(String),
    #[error("ill-conditioned system (condition number {cond:.3e}): {hint}")]
    IllConditioned { cond: f64, hint: String },
    /// Scaling fit hit the floating-point floor.
    #[error("remainder at rounding floor ({value:.3e}); use larger eps values")]
    RoundingFloor { value: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
