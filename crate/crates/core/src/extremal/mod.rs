//! Extremal metrics: certificates, pointwise identities, the closed-form
//! maximizer of `F¹` and an ascent method that finds it numerically.

mod certificate;
mod conditions;
mod maximizer;
mod optimize;

pub use certificate::{certify_extremal, CertifyOptions, ExtremalityCertificate, SeparatingWitness};
pub use conditions::{
    conformal_laplacian_of, for_eigen_residual, harmonic_map_residual, necessary_condition_residual, ForEigenResidual,
    HarmonicMapReport, NecessaryCondition,
};
pub use maximizer::{check_curvature_sign, construct_maximizer, MaximizerResult, DEFAULT_R_FLOOR};
pub use optimize::{optimize_f1, OptimizeResult, OptimizeStep, OptimizerOptions};
