use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point t = {t} lies outside the domain of the weight ({detail})")]
    Domain { t: f64, detail: String },

    #[error("weight is not differentiable at t = {t}")]
    NonDifferentiable { t: f64 },

    #[error("operation needs a smooth weight: {0}")]
    Smoothness(String),

    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    Convergence { estimate: f64, error_bound: f64 },

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("geometry error: {0}")]
    Geometry(String),
}

pub type Result<T> = std::result::Result<T, Error>;
