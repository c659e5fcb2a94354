//! Projected ascent on `F¹`.
//!
//! `λ₁` is simple, so `F¹` is differentiable and along a generator `h`
//!
//! ```text
//! dF¹ = q·λ₁·Σ h·(1 − v₁²)·w·dv
//! ```
//!
//! at a normalized factor. Writing `h = w₀·μ²` turns this into
//! `−q·λ₁·⟨w₀, v₁²⟩` in `L²(dv_g̃)`, so the steepest zero-mean `w₀` is
//! `−q·λ₁·(v₁² − mean v₁²)`. Each step moves `log μ` along `h`, renormalizes
//! and backtracks until Armijo's condition holds.
//!
//! On Galerkin classes `h` is first projected onto the discrete space so
//! that `log μ` stays band-limited; otherwise the ascent would chase
//! quadrature artifacts between nodes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{eval_f_with_spectrum, yamabe_sign, DEFAULT_SIGN_TOL};
use crate::geometry::{conformal_data, normalize_factor, ConformalFactor, DiscreteConformalClass, Discretization};
use crate::spectral::{SolverOptions, SpectrumResult};

use super::maximizer::{check_curvature_sign, DEFAULT_R_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Stop once `sup|v₁² − mean|` or the log-step falls below this.
    pub opt_tol: f64,
    pub max_iter: usize,
    pub armijo: f64,
    pub r_floor: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self { opt_tol: 1e-7, max_iter: 500, armijo: 1e-4, r_floor: DEFAULT_R_FLOOR }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeStep {
    pub iteration: usize,
    pub f: f64,
    /// `sup|v₁² − mean v₁²|`, zero exactly at critical points.
    pub stationarity: f64,
    /// `sup|t·h|`, the change in `log μ`.
    pub step: f64,
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeResult {
    pub mu_star: ConformalFactor,
    pub f_star: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<OptimizeStep>,
}

struct Ascent {
    h: Vec<f64>,
    /// Directional derivative of `F¹` along `h`.
    slope: f64,
    stationarity: f64,
}

fn ascent_direction(class: &DiscreteConformalClass, mu: &ConformalFactor, lambda: f64, v: &[f64]) -> Result<Ascent> {
    let data = conformal_data(class, mu)?;
    let q = class.q();
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let total: f64 = data.vol_tilde.iter().sum();
    let mean = v2.iter().zip(&data.vol_tilde).map(|(a, b)| a * b).sum::<f64>() / total;
    let stationarity = v2.iter().fold(0.0_f64, |m, x| m.max((x - mean).abs()));
    let g: Vec<f64> = v2.iter().zip(mu.values()).map(|(x, m)| -q * lambda * (x - mean) * m * m).collect();
    let h = match class.discretization() {
        Discretization::Nodal => g,
        Discretization::Galerkin { values, .. } => {
            // Steepest ascent within the span in L²(μ^{q−2} dv), the metric
            // in which dF¹ is represented by g.
            let nu: Vec<f64> = mu.values().iter().zip(class.dv()).map(|(m, d)| m.powf(q - 2.0) * d).collect();
            let mut wphi = values.clone();
            for (mut row, n) in wphi.row_iter_mut().zip(&nu) {
                row *= *n;
            }
            let gram: DMatrix<f64> = values.transpose() * &wphi;
            let rhs = wphi.transpose() * DVector::from_column_slice(&g);
            let a = gram
                .cholesky()
                .ok_or_else(|| Error::LinearAlgebra("projection Gram matrix is not positive definite".into()))?
                .solve(&rhs);
            (values * a).as_slice().to_vec()
        }
    };
    let slope = q * lambda * h.iter().zip(&v2).zip(&data.weight).zip(class.dv()).map(|(((h, x), w), d)| h * (1.0 - x) * w * d).sum::<f64>();
    Ok(Ascent { h, slope, stationarity })
}

fn step_factor(mu: &ConformalFactor, h: &[f64], t: f64, class: &DiscreteConformalClass) -> Result<ConformalFactor> {
    let raw = ConformalFactor::new(mu.values().iter().zip(h).map(|(m, h)| m * (t * h).exp()).collect())?;
    normalize_factor(class, &raw)
}

fn lead(s: &SpectrumResult) -> (f64, Vec<f64>) {
    (s.lambda(1), s.eigenvectors[0].clone())
}

/// Maximizes `F¹` from `mu_init`.
pub fn optimize_f1(
    class: &DiscreteConformalClass,
    mu_init: &ConformalFactor,
    opts: &OptimizerOptions,
    solver: &SolverOptions,
) -> Result<OptimizeResult> {
    let sign = check_curvature_sign(class, opts.r_floor)?;
    let yamabe = yamabe_sign(class, solver, DEFAULT_SIGN_TOL)?;
    if yamabe != sign {
        return Err(Error::NotApplicable(format!("Yamabe sign {yamabe} disagrees with the curvature sign {sign}")));
    }
    let mut mu = normalize_factor(class, mu_init)?;
    let (mut fv, mut spec) = eval_f_with_spectrum(class, &mu, 1, solver, &[])?;
    let (mut lambda, mut v) = lead(&spec);
    let mut dir = ascent_direction(class, &mu, lambda, &v)?;
    let mut trace = vec![OptimizeStep { iteration: 0, f: fv.value, stationarity: dir.stationarity, step: 0.0, backtracks: 0 }];
    let mut prev: Option<(Vec<f64>, f64)> = None;

    for iteration in 1..=opts.max_iter {
        let hmax = dir.h.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if dir.stationarity <= opts.opt_tol || hmax == 0.0 {
            return Ok(OptimizeResult { f_star: fv.value, mu_star: mu, iterations: iteration - 1, converged: true, trace });
        }
        // Barzilai–Borwein length from the previous step, capped at a unit
        // change of log μ.
        let mut t = match &prev {
            None => 0.1 / hmax,
            Some((h_old, t_old)) => {
                let s: Vec<f64> = h_old.iter().map(|x| t_old * x).collect();
                let ss: f64 = s.iter().map(|x| x * x).sum();
                let sy: f64 = s.iter().zip(h_old).zip(&dir.h).map(|((s, a), b)| s * (b - a)).sum();
                if sy < 0.0 {
                    ss / -sy
                } else {
                    2.0 * t_old
                }
            }
        };
        t = t.min(1.0 / hmax);
        let guesses = spec.coefficients.clone();
        let mut backtracks = 0;
        let accepted = loop {
            let cand = step_factor(&mu, &dir.h, t, class)?;
            let (cf, cs) = eval_f_with_spectrum(class, &cand, 1, solver, &guesses)?;
            if cf.value >= fv.value + opts.armijo * t * dir.slope {
                break Some((cand, cf, cs));
            }
            backtracks += 1;
            t *= 0.5;
            if backtracks > 40 {
                break None;
            }
        };
        let Some((cand, cf, cs)) = accepted else {
            // No increase is resolvable above rounding of F: a critical point
            // to working precision.
            if dir.slope * t * hmax.max(1.0) <= 1e-13 * fv.value.abs() {
                log::debug!("line search exhausted at stationarity {:.3e}", dir.stationarity);
                return Ok(OptimizeResult { f_star: fv.value, mu_star: mu, iterations: iteration - 1, converged: true, trace });
            }
            log::warn!("line search failed; trace: {trace:?}");
            return Err(Error::LineSearch { iteration, step: t });
        };
        let step = t * hmax;
        prev = Some((dir.h.clone(), t));
        mu = cand;
        fv = cf;
        spec = cs;
        (lambda, v) = lead(&spec);
        dir = ascent_direction(class, &mu, lambda, &v)?;
        trace.push(OptimizeStep { iteration, f: fv.value, stationarity: dir.stationarity, step, backtracks });
        if step <= opts.opt_tol {
            return Ok(OptimizeResult { f_star: fv.value, mu_star: mu, iterations: iteration, converged: true, trace });
        }
    }
    let iterations = opts.max_iter;
    Ok(OptimizeResult { f_star: fv.value, mu_star: mu, iterations, converged: false, trace })
}
