//! The closed-form maximizer of `F¹` for single-signed curvature.
//!
//! With `μ_max^q = R/ΣR dv`, the weighted mass is `M_w 1 = (R/ΣR dv)·dv`
//! and `A 1 = c_n R dv` because `S 1 = 0`, so the constant vector is an
//! exact eigenvector with eigenvalue `c_n ΣR dv`. It is the lowest one since
//! it has one sign.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{factor_mass, ConformalFactor, DiscreteConformalClass};
use crate::linalg::norm;
use crate::spectral::{assemble_operator, solve_pencil, SolverOptions, WeightedMass};

pub const DEFAULT_R_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximizerResult {
    pub mu_max: ConformalFactor,
    /// `c_n Σ R dv`.
    pub lambda1: f64,
    /// `λ₁` of the pencil at `mu_max`, from the eigensolver.
    pub lambda1_check: f64,
    /// `‖A1 − Λ₁ M_w 1‖ / ‖A1‖`.
    pub eigenvector_check: f64,
    /// Whether the computed first eigenvector has one sign.
    pub eigenvector_positive: bool,
    pub mass: f64,
}

/// Errors unless `|R| ≥ r_floor` everywhere with one sign; returns the sign.
pub fn check_curvature_sign(class: &DiscreteConformalClass, r_floor: f64) -> Result<i8> {
    let r = class.curvature();
    let min = r.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min >= r_floor {
        Ok(1)
    } else if max <= -r_floor {
        Ok(-1)
    } else {
        Err(Error::CurvatureSign { min, max })
    }
}

pub fn construct_maximizer(class: &DiscreteConformalClass, r_floor: f64, opts: &SolverOptions) -> Result<MaximizerResult> {
    check_curvature_sign(class, r_floor)?;
    let total = class.integrate(class.curvature());
    let lambda1 = class.c_n() * total;
    let q = class.q();
    let mu_max = ConformalFactor::new(class.curvature().iter().map(|r| (r / total).powf(1.0 / q)).collect())?;

    let op = assemble_operator(class);
    let weight: Vec<f64> = mu_max.values().iter().map(|m| m.powf(q)).collect();
    let mass_op = WeightedMass::new(class, &weight);
    let one = class.constant_dofs();
    let a1 = op.apply_vec(&one);
    let m1 = mass_op.apply_vec(&one);
    let diff: Vec<f64> = a1.iter().zip(&m1).map(|(a, m)| a - lambda1 * m).collect();
    let eigenvector_check = norm(&diff) / norm(&a1);

    let spectrum = solve_pencil(class, &mu_max, 1, opts)?;
    let v = &spectrum.eigenvectors[0];
    let eigenvector_positive = v.iter().all(|&x| x > 0.0) || v.iter().all(|&x| x < 0.0);
    Ok(MaximizerResult {
        lambda1_check: spectrum.lambda(1),
        mass: factor_mass(class, &mu_max),
        mu_max,
        lambda1,
        eigenvector_check,
        eigenvector_positive,
    })
}
