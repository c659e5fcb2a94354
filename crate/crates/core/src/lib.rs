//! Spectra of the conformal Laplacian `L_g = −Δ_g + c_n R_g` across a
//! conformal class, and the normalized eigenvalue functional
//!
//! ```text
//! F^k(μ) = λ_k(L_{μ^q g}) · ∫ μ^q dv_g,     q = 4/(n−2)
//! ```
//!
//! A class is given by discrete background data `(S, dv, R, n)`
//! ([`geometry`]). Every factor `μ` turns the conformal Laplacian of
//! `μ^q g` into the weighted pencil `A v = λ M_w v` ([`spectral`]), from
//! which [`functional`] evaluates `F^k`. [`perturbation`] differentiates
//! `λ_k` and `F^k` along conformal deformations, including degenerate
//! clusters, and [`extremal`] certifies extremal metrics and builds the
//! maximizer of `F¹` for single-signed curvature.
//!
//! ```
//! use conflap::extremal::{construct_maximizer, DEFAULT_R_FLOOR};
//! use conflap::geometry::{build_torus_class, FieldSpec};
//! use conflap::spectral::SolverOptions;
//!
//! let tau = std::f64::consts::TAU;
//! let class = build_torus_class([8; 3], [tau; 3], &FieldSpec::Constant(6.0)).unwrap();
//! let max = construct_maximizer(&class, DEFAULT_R_FLOOR, &SolverOptions::default()).unwrap();
//! assert!((max.lambda1 - 6.0 * std::f64::consts::PI.powi(3)).abs() < 1e-8);
//! ```

pub mod error;
pub mod extremal;
pub mod functional;
pub mod geometry;
mod linalg;
pub mod perturbation;
pub mod spectral;

pub use error::{Error, Result};

/// Version of this crate, recorded in experiment reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
