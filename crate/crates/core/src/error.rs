use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants that correspond to a violated mathematical hypothesis report a
/// stable tag through [`Error::hypothesis`]; everything else is an input or
/// numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid construction: {0}")]
    Construction(String),

    #[error("invalid conformal factor at node {node}: {value} (floor {floor})")]
    InvalidFactor { node: usize, value: f64, floor: f64 },

    #[error("length mismatch: expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("requested {requested} eigenpairs but the problem has {available} degrees of freedom")]
    TooManyEigenpairs { requested: usize, available: usize },

    #[error("eigensolver did not converge after {iterations} iterations (worst relative residual {residual:.3e}, target {target:.3e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        target: f64,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("eigenvalue index k={k} is interior to a cluster of size {size}: neither gap condition holds")]
    NoGap { k: usize, size: usize },

    #[error("eigenvalue lambda_{k} = {value:.3e} is numerically zero")]
    ZeroEigenvalue { k: usize, value: f64 },

    #[error("scalar curvature changes sign or vanishes (min {min:.3e}, max {max:.3e}); no extremal metric for F^1 can exist on this background")]
    CurvatureSign { min: f64, max: f64 },

    #[error("conformal factor is not normalized: integral of mu^q dv = {mass:.12e}, expected 1")]
    NotNormalized { mass: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("certificate is infeasible (sup residual {residual:.3e})")]
    InfeasibleCertificate { residual: f64 },

    #[error("cluster basis mismatch: {0}")]
    ClusterMismatch(String),

    #[error("line search failed at iteration {iteration} (last step {step:.3e})")]
    LineSearch { iteration: usize, step: f64 },

    #[error("finite-difference step t={t} makes the factor non-positive at node {node}")]
    NonPositiveStep { t: f64, node: usize },

    #[error("expression error: {0}")]
    Expression(String),
}

impl Error {
    /// Tag of the mathematical hypothesis this error reports, if any.
    pub fn hypothesis(&self) -> Option<&'static str> {
        match self {
            Error::NoGap { .. } => Some("gap_condition"),
            Error::ZeroEigenvalue { .. } => Some("nonzero_eigenvalue"),
            Error::CurvatureSign { .. } => Some("necessary_condition_sign"),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
