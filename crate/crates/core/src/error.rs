use thiserror::Error;

/// Errors raised by grid construction, assembly, solves and studies.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid resolution: n = {0} (need n >= 2)")]
    InvalidResolution(usize),

    #[error(
        "coefficient interfaces at y = 1/2 do not lie on grid lines for n = {0} (need even n)"
    )]
    InterfaceMisalignment(usize),

    #[error("oscillatory coefficient on the physical domain requires a scale eps")]
    MissingScale,

    #[error("bad constraint: {0}")]
    BadConstraint(String),

    #[error("incompatible right-hand side: sum = {sum:e} exceeds tolerance {tol:e}")]
    IncompatibleRhs { sum: f64, tol: f64 },

    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("eps = {0} is not the reciprocal of an integer")]
    UnsupportedScale(f64),

    #[error("grid incompatibility: {0}")]
    GridIncompatibility(String),

    #[error("cell data inconsistency: {0}")]
    Inconsistency(String),

    #[error("insufficient data for rate fit: {usable} usable points (need 3)")]
    InsufficientData { usable: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
