use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time pair: need s < t, got s = {s}, t = {t}")]
    TimeOrder { s: f64, t: f64 },

    #[error("point {value} lies outside the state space (lower boundary {ell})")]
    OutsideDomain { value: f64, ell: f64 },

    #[error("invalid domain: lower boundary {ell} must be below upper truncation {z_upper}")]
    InvalidDomain { ell: f64, z_upper: f64 },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("finite-difference grid unstable: cell Péclet number {peclet:.3e} at z = {z}")]
    UnstableGrid { peclet: f64, z: f64 },

    #[error("kernel validation failed: {what} error {error:.3e} exceeds threshold {threshold:.3e}")]
    ValidationFailed {
        what: &'static str,
        error: f64,
        threshold: f64,
    },

    #[error("measure has non-positive total mass {mass}")]
    EmptyMeasure { mass: f64 },

    #[error("sinkhorn did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("quadrature truncation: {tail:.3e} of the integral sits in the outer panels")]
    Truncation { tail: f64 },

    #[error("terminal law is undefined: {0}")]
    DegenerateTerminal(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
