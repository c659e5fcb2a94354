//! Block Davidson iteration with shift-invert corrections.
//!
//! Finds the lowest eigenpairs of a symmetric operator `B`. Each
//! unconverged Ritz pair `(θ, x)` contributes the correction
//! `(B − σ)⁻¹ (Bx − θx)`, computed approximately by Jacobi-PCG, where `σ`
//! lies strictly below the spectrum. `σ` starts at a safe lower bound and
//! moves up to `θ₁ − max(‖r₁‖, gap/100)` once the lowest Ritz pair is
//! separated from the next; should PCG then meet non-positive curvature the
//! safe bound is restored for good. The basis is kept orthonormal by two
//! rounds of Gram–Schmidt and every Rayleigh–Ritz step uses the exact
//! operator, so inexact inner solves slow convergence but do not bias the
//! result. Because the right-hand sides shrink with the residuals, the
//! iteration converges to rounding level.

use nalgebra::DMatrix;

use super::{axpy, dot, norm, pcg, symmetric_eigh};
use crate::error::{Error, Result};

pub(crate) trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub(crate) struct DavidsonOptions {
    pub nev: usize,
    pub block: usize,
    pub max_basis: usize,
    /// Residual at which a pair counts as converged.
    pub target: f64,
    pub max_iterations: usize,
    /// Shift known to lie below the lowest eigenvalue.
    pub shift: f64,
    /// A stalled iteration is returned once its residuals are below this;
    /// callers re-check the pairs in their own norm.
    pub floor: f64,
    pub inner_tol: f64,
    pub inner_max: usize,
}

pub(crate) struct DavidsonResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

struct Basis {
    v: Vec<Vec<f64>>,
    av: Vec<Vec<f64>>,
    h: DMatrix<f64>,
}

impl Basis {
    fn len(&self) -> usize {
        self.v.len()
    }

    /// Orthogonalizes `t` against the basis and appends it; returns false if
    /// nothing independent is left.
    fn push(&mut self, op: &impl LinearOperator, mut t: Vec<f64>) -> bool {
        let n0 = norm(&t);
        if n0 == 0.0 || !n0.is_finite() {
            return false;
        }
        for _ in 0..2 {
            for vi in &self.v {
                let c = dot(vi, &t);
                axpy(-c, vi, &mut t);
            }
        }
        let n1 = norm(&t);
        if n1 <= 1e-10 * n0 {
            return false;
        }
        t.iter_mut().for_each(|x| *x /= n1);
        let mut at = vec![0.0; t.len()];
        op.apply(&t, &mut at);
        let m = self.len();
        let mut h = DMatrix::zeros(m + 1, m + 1);
        h.view_mut((0, 0), (m, m)).copy_from(&self.h);
        for i in 0..m {
            let e = dot(&self.v[i], &at);
            h[(i, m)] = e;
            h[(m, i)] = e;
        }
        h[(m, m)] = dot(&t, &at);
        self.h = h;
        self.v.push(t);
        self.av.push(at);
        true
    }

    fn combine(vs: &[Vec<f64>], y: &DMatrix<f64>, col: usize) -> Vec<f64> {
        let mut out = vec![0.0; vs[0].len()];
        for (j, v) in vs.iter().enumerate() {
            let c = y[(j, col)];
            if c != 0.0 {
                axpy(c, v, &mut out);
            }
        }
        out
    }
}

pub(crate) fn davidson(op: &impl LinearOperator, start: Vec<Vec<f64>>, opts: &DavidsonOptions) -> Result<DavidsonResult> {
    let n = op.dim();
    let block = opts.block.max(opts.nev).min(n);
    let mut basis = Basis { v: Vec::new(), av: Vec::new(), h: DMatrix::zeros(0, 0) };
    for s in start {
        basis.push(op, s);
    }
    if basis.len() < opts.nev {
        return Err(Error::LinearAlgebra("starting block is rank deficient".into()));
    }
    let diag = op.diagonal();
    let mut shift = opts.shift;
    let mut adaptive = true;
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut last: Option<DavidsonResult> = None;
    for iteration in 0..opts.max_iterations {
        let (theta, y) = symmetric_eigh(basis.h.clone());
        let nb = block.min(basis.len());
        let mut ritz = Vec::with_capacity(nb);
        let mut resid = Vec::with_capacity(nb);
        let mut rnorm = Vec::with_capacity(nb);
        for i in 0..nb {
            let x = Basis::combine(&basis.v, &y, i);
            let mut r = Basis::combine(&basis.av, &y, i);
            axpy(-theta[i], &x, &mut r);
            rnorm.push(norm(&r));
            ritz.push(x);
            resid.push(r);
        }
        let worst = rnorm[..opts.nev].iter().cloned().fold(0.0, f64::max);
        let result = DavidsonResult {
            values: theta[..opts.nev].to_vec(),
            vectors: ritz[..opts.nev].to_vec(),
            residuals: rnorm[..opts.nev].to_vec(),
            iterations: iteration,
        };
        if worst <= opts.target {
            return Ok(result);
        }
        if worst < 0.5 * best {
            best = worst;
            since_best = 0;
        } else {
            since_best += 1;
            // Residuals at the rounding floor of B stop halving. The caller
            // judges the pairs by their backward error in the original pencil.
            if since_best >= 20 && worst <= opts.floor {
                log::debug!("davidson stagnated at residual {worst:.3e} after {iteration} iterations");
                return Ok(result);
            }
        }
        last = Some(result);

        let active: Vec<usize> = (0..nb).filter(|&i| rnorm[i] > opts.target).collect();
        if basis.len() + active.len() > opts.max_basis.min(n) {
            let keep = (2 * block).min(basis.len());
            let v: Vec<Vec<f64>> = (0..keep).map(|i| Basis::combine(&basis.v, &y, i)).collect();
            let av: Vec<Vec<f64>> = (0..keep).map(|i| Basis::combine(&basis.av, &y, i)).collect();
            let mut h = DMatrix::zeros(keep, keep);
            for i in 0..keep {
                for j in 0..keep {
                    h[(i, j)] = dot(&v[i], &av[j]);
                }
            }
            basis = Basis { v, av, h: (&h + h.transpose()) * 0.5 };
        }
        if adaptive && nb > 1 {
            let gap = theta[1] - theta[0];
            if rnorm[0] < 0.1 * gap {
                shift = shift.max(theta[0] - rnorm[0].max(0.01 * gap));
            }
        }
        let mut added = 0;
        for &i in &active {
            let mut t = vec![0.0; n];
            loop {
                let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / (d - shift)).collect();
                let shifted = |x: &[f64], y: &mut [f64]| {
                    op.apply(x, y);
                    axpy(-shift, x, y);
                };
                let definite = diag.iter().all(|&d| d > shift);
                if definite && pcg(shifted, &inv_diag, &resid[i], &mut t, opts.inner_tol, opts.inner_max).is_some() {
                    break;
                }
                if shift == opts.shift {
                    return Err(Error::LinearAlgebra("shifted operator is not positive definite".into()));
                }
                log::debug!("shift {shift:.6e} is not below the spectrum; reverting to {:.6e}", opts.shift);
                shift = opts.shift;
                adaptive = false;
                t.iter_mut().for_each(|x| *x = 0.0);
            }
            if basis.len() < n && basis.push(op, t) {
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
    }
    let last = last.expect("at least one iteration");
    let worst = last.residuals.iter().cloned().fold(0.0, f64::max);
    if worst <= opts.floor {
        return Ok(last);
    }
    Err(Error::NoConvergence { iterations: last.iterations, residual: worst, target: opts.target })
}
