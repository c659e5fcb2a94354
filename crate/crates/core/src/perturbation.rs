//! First-order behaviour of `λ_k` and `F^k` along conformal deformations.
//!
//! A deformation `g(t) = μ_t^q g̃` with `μ_0 = 1` and generator
//! `h = dμ_t/dt|₀` changes the weight of the pencil by `dw/dt = q·h·w`. On a
//! cluster of `λ_k` with weighted-orthonormal basis `v_1 … v_m` the branch
//! slopes are the eigenvalues of
//!
//! ```text
//! T_ij = −q·λ_k·Σ h·v_i·v_j·w·dv
//! ```
//!
//! and the one-sided derivatives of the k-th sorted eigenvalue are the
//! smallest or largest of them, depending on which side of the cluster `k`
//! sits. [`fd_oracle`] recovers the same numbers by re-solving the pencil.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{conformal_data, factor_mass, ConformalFactor, DiscreteConformalClass};
use crate::linalg::{ksum, symmetric_eigh};
use crate::spectral::{rayleigh_quotient, solve_pencil_warm, spectrum_resolving, SolverOptions, SpectrumResult};

/// Tolerance on `Σ μ̃^q dv = 1` for the F-derivative formulas.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Default finite-difference steps.
pub const DEFAULT_STEPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

/// Generator `h = dμ_t/dt` of a deformation relative to the current metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeformationDirection(Vec<f64>);

impl DeformationDirection {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if let Some(i) = h.iter().position(|x| !x.is_finite()) {
            return Err(Error::Construction(format!("direction has a non-finite entry at node {i}")));
        }
        Ok(Self(h))
    }

    pub fn constant(class: &DiscreteConformalClass, c: f64) -> Result<Self> {
        Self::new(vec![c; class.num_nodes()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn check_len(&self, class: &DiscreteConformalClass) -> Result<()> {
        if self.0.len() != class.num_nodes() {
            return Err(Error::LengthMismatch { expected: class.num_nodes(), actual: self.0.len() });
        }
        Ok(())
    }
}

/// Where `k` sits in its cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseTag {
    /// `λ_{k−1} < λ_k`: right derivative is the minimum slope.
    GapBelow,
    /// `λ_k < λ_{k+1}`: right derivative is the maximum slope.
    GapAbove,
    /// Simple eigenvalue.
    BothGaps,
    NoGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub k: usize,
    pub lambda_k: f64,
    /// Zero-based index of the first cluster member.
    pub cluster_start: usize,
    /// Branch slopes, ascending; one per cluster member.
    pub derivative_set: Vec<f64>,
    /// The projected form, row-major.
    pub t_matrix: Vec<Vec<f64>>,
    pub case_tag: CaseTag,
    pub lambda_right: f64,
    pub lambda_left: f64,
    pub f_right: f64,
    pub f_left: f64,
    /// `q·λ_k·Σ h μ̃^q dv`.
    pub volume_term: f64,
    /// Set when slopes coincide, so the eigenvectors of `T` do not single
    /// out branch directions.
    pub repeated_slopes: bool,
}

/// `T` for an explicit weighted-orthonormal basis of node fields.
///
/// The basis must be orthonormal in `Σ v_i v_j w dv` to `1e-8`.
pub fn perturbation_form(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    lambda: f64,
    basis: &[Vec<f64>],
    h: &DeformationDirection,
) -> Result<DMatrix<f64>> {
    h.check_len(class)?;
    let data = conformal_data(class, mu)?;
    let wdv: Vec<f64> = data.weight.iter().zip(class.dv()).map(|(w, d)| w * d).collect();
    let m = basis.len();
    if m == 0 {
        return Err(Error::ClusterMismatch("empty basis".into()));
    }
    for v in basis {
        if v.len() != class.num_nodes() {
            return Err(Error::LengthMismatch { expected: class.num_nodes(), actual: v.len() });
        }
    }
    let q = class.q();
    let hw: Vec<f64> = h.values().iter().zip(&wdv).map(|(a, b)| a * b).collect();
    let mut gram = DMatrix::zeros(m, m);
    let mut e = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let g = ksum((0..wdv.len()).map(|x| basis[i][x] * basis[j][x] * wdv[x]));
            let target = if i == j { 1.0 } else { 0.0 };
            if (g - target).abs() > 1e-8 {
                return Err(Error::ClusterMismatch(format!("basis is not weighted-orthonormal: entry ({i},{j}) = {g:.3e}")));
            }
            gram[(i, j)] = g;
            gram[(j, i)] = g;
            e[(i, j)] = ksum((0..hw.len()).map(|x| basis[i][x] * basis[j][x] * hw[x]));
            e[(j, i)] = e[(i, j)];
        }
    }
    // Exact projection for the nearly orthonormal basis: G^{-1/2} E G^{-1/2}.
    let (gv, gq) = symmetric_eigh(gram);
    let inv_sqrt = &gq * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(m, gv.iter().map(|x| 1.0 / x.sqrt()))) * gq.transpose();
    let mut t = &inv_sqrt * e * &inv_sqrt * (-q * lambda);
    t = (&t + t.transpose()) * 0.5;
    Ok(t)
}

/// `T` on the cluster of `λ_k` in `spectrum` and its eigenvalues, ascending.
pub fn projected_perturbation_matrix(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    spectrum: &SpectrumResult,
    k: usize,
    h: &DeformationDirection,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if k == 0 || k > spectrum.len() {
        return Err(Error::ClusterMismatch(format!("k={k} outside the {} computed eigenvalues", spectrum.len())));
    }
    let cluster = spectrum.cluster_of(k);
    if cluster.end() > spectrum.eigenvectors.len() {
        return Err(Error::ClusterMismatch("cluster extends past the computed eigenvectors".into()));
    }
    let basis = &spectrum.eigenvectors[cluster.start..cluster.end()];
    let t = perturbation_form(class, mu, spectrum.lambda(k), basis, h)?;
    let (set, _) = symmetric_eigh(t.clone());
    Ok((t, set))
}

/// Picks the one-sided derivatives of `λ_k` from the branch slopes.
///
/// `gap_below` means `λ_{k−1} < λ_k` (or `k = 1`), `gap_above` means
/// `λ_k < λ_{k+1}`. Returns `(right, left, case)`.
pub fn one_sided_lambda_derivatives(derivative_set: &[f64], gap_below: bool, gap_above: bool, k: usize) -> Result<(f64, f64, CaseTag)> {
    let m = derivative_set.len();
    if m == 0 {
        return Err(Error::ClusterMismatch("empty derivative set".into()));
    }
    let min = derivative_set.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = derivative_set.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match (gap_below, gap_above) {
        (true, true) => {
            if m != 1 {
                return Err(Error::ClusterMismatch(format!("both gaps hold but the cluster has {m} members")));
            }
            Ok((min, min, CaseTag::BothGaps))
        }
        (true, false) => Ok((min, max, CaseTag::GapBelow)),
        (false, true) => Ok((max, min, CaseTag::GapAbove)),
        (false, false) => Err(Error::NoGap { k, size: m }),
    }
}

/// One-sided derivatives of `λ_k` and `F^k` at a normalized factor.
pub fn one_sided_f_derivatives(
    class: &DiscreteConformalClass,
    mu_tilde: &ConformalFactor,
    h: &DeformationDirection,
    k: usize,
    opts: &SolverOptions,
) -> Result<PerturbationReport> {
    check_normalized(class, mu_tilde)?;
    let spectrum = spectrum_resolving(class, mu_tilde, k, opts)?;
    one_sided_f_derivatives_with_spectrum(class, mu_tilde, h, k, &spectrum)
}

/// As [`one_sided_f_derivatives`] with a precomputed spectrum whose
/// cluster of `λ_k` is closed.
pub fn one_sided_f_derivatives_with_spectrum(
    class: &DiscreteConformalClass,
    mu_tilde: &ConformalFactor,
    h: &DeformationDirection,
    k: usize,
    spectrum: &SpectrumResult,
) -> Result<PerturbationReport> {
    check_normalized(class, mu_tilde)?;
    let mut report = lambda_report(class, mu_tilde, h, k, spectrum)?;
    let q = class.q();
    let hm = ksum(h.values().iter().zip(mu_tilde.values()).zip(class.dv()).map(|((h, m), d)| h * m.powf(q) * d));
    report.volume_term = q * report.lambda_k * hm;
    report.f_right = report.volume_term + report.lambda_right;
    report.f_left = report.volume_term + report.lambda_left;
    Ok(report)
}

/// One-sided derivatives of `λ_k` alone; no normalization is required.
/// The F fields of the report are left at zero.
pub fn lambda_report(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    h: &DeformationDirection,
    k: usize,
    spectrum: &SpectrumResult,
) -> Result<PerturbationReport> {
    let (t, set) = projected_perturbation_matrix(class, mu, spectrum, k, h)?;
    let cluster = spectrum.cluster_of(k);
    if !cluster.closed {
        return Err(Error::ClusterMismatch(format!("the cluster of lambda_{k} is not known to be complete")));
    }
    let gap_below = k - 1 == cluster.start;
    let gap_above = k == cluster.end();
    let (right, left, case_tag) = one_sided_lambda_derivatives(&set, gap_below, gap_above, k)?;
    let scale = set.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let repeated_slopes = set.windows(2).any(|w| w[1] - w[0] <= 1e-9 * scale);
    Ok(PerturbationReport {
        k,
        lambda_k: spectrum.lambda(k),
        cluster_start: cluster.start,
        derivative_set: set,
        t_matrix: t.row_iter().map(|r| r.iter().copied().collect()).collect(),
        case_tag,
        lambda_right: right,
        lambda_left: left,
        f_right: 0.0,
        f_left: 0.0,
        volume_term: 0.0,
        repeated_slopes: repeated_slopes && cluster.size > 1,
    })
}

fn check_normalized(class: &DiscreteConformalClass, mu: &ConformalFactor) -> Result<()> {
    let mass = factor_mass(class, mu);
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { mass });
    }
    Ok(())
}

/// `h = w₀·μ̃²` with `w₀` the field minus its mean under `μ̃^{2+q} dv`, the
/// volume of the current metric. Such generators leave the volume fixed to
/// first order.
pub fn zero_mean_generator(class: &DiscreteConformalClass, mu_tilde: &ConformalFactor, w_field: &[f64]) -> Result<DeformationDirection> {
    if w_field.len() != class.num_nodes() {
        return Err(Error::LengthMismatch { expected: class.num_nodes(), actual: w_field.len() });
    }
    let vol = conformal_data(class, mu_tilde)?.vol_tilde;
    let total: f64 = vol.iter().sum();
    let mut w0 = w_field.to_vec();
    // The second pass removes what rounding left of the mean.
    for _ in 0..2 {
        let mean = w0.iter().zip(&vol).map(|(a, b)| a * b).sum::<f64>() / total;
        w0.iter_mut().for_each(|x| *x -= mean);
    }
    DeformationDirection::new(w0.iter().zip(mu_tilde.values()).map(|(w, m)| w * m * m).collect())
}

/// Difference-quotient estimates of the one-sided derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub f_right: f64,
    pub f_left: f64,
    pub lambda_right: f64,
    pub lambda_left: f64,
    /// Change between the last two extrapolation orders, per field above.
    pub errors: [f64; 4],
    pub steps: Vec<f64>,
}

/// Re-solves the pencil at `μ_t = μ̃·(1 + t·h)` for `t = ±step` and
/// extrapolates the one-sided quotients of `F^k` and of the k-th sorted
/// eigenvalue to `t = 0`.
pub fn fd_oracle(
    class: &DiscreteConformalClass,
    mu_tilde: &ConformalFactor,
    h: &DeformationDirection,
    k: usize,
    steps: &[f64],
    opts: &SolverOptions,
) -> Result<FdEstimate> {
    h.check_len(class)?;
    if steps.is_empty() || steps.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Construction("steps must be positive".into()));
    }
    let base = solve_pencil_warm(class, mu_tilde, k, opts, &[])?;
    let lam0 = refined_lambda(class, mu_tilde, &base, k)?;
    let mass0 = factor_mass(class, mu_tilde);
    let guesses = base.coefficients.clone();

    let ts: Vec<f64> = steps.iter().flat_map(|&s| [s, -s]).collect();
    let evals: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| {
            let vals: Vec<f64> = mu_tilde.values().iter().zip(h.values()).map(|(m, h)| m * (1.0 + t * h)).collect();
            if let Some(node) = vals.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::NonPositiveStep { t, node });
            }
            let mu_t = ConformalFactor::new(vals)?;
            let s = solve_pencil_warm(class, &mu_t, k, opts, &guesses)?;
            let lam = refined_lambda(class, &mu_t, &s, k)?;
            Ok((lam, lam * factor_mass(class, &mu_t)))
        })
        .collect::<Result<_>>()?;

    let f0 = lam0 * mass0;
    let quotients = |side: usize, pick: fn(&(f64, f64)) -> f64, origin: f64| -> Vec<f64> {
        steps.iter().enumerate().map(|(i, _)| (pick(&evals[2 * i + side]) - origin) / ts[2 * i + side]).collect()
    };
    let sides = [
        quotients(0, |e| e.1, f0),
        quotients(1, |e| e.1, f0),
        quotients(0, |e| e.0, lam0),
        quotients(1, |e| e.0, lam0),
    ];
    let signed: Vec<f64> = steps.to_vec();
    let mut out = [0.0; 4];
    let mut errors = [0.0; 4];
    for (i, d) in sides.iter().enumerate() {
        let (v, e) = extrapolate(&signed, d);
        out[i] = v;
        errors[i] = e;
    }
    Ok(FdEstimate {
        f_right: out[0],
        f_left: out[1],
        lambda_right: out[2],
        lambda_left: out[3],
        errors,
        steps: steps.to_vec(),
    })
}

/// k-th smallest Rayleigh quotient of the computed eigenvectors. Quotients
/// are accurate to a few ulps, which the difference quotients need.
fn refined_lambda(class: &DiscreteConformalClass, mu: &ConformalFactor, s: &SpectrumResult, k: usize) -> Result<f64> {
    let mut rq = s.coefficients.iter().map(|c| rayleigh_quotient(class, mu, c)).collect::<Result<Vec<_>>>()?;
    rq.sort_by(f64::total_cmp);
    Ok(rq[k - 1])
}

/// Neville extrapolation of `d(t)` to `t = 0`; returns the value and the
/// change from the previous order.
fn extrapolate(t: &[f64], d: &[f64]) -> (f64, f64) {
    let n = t.len();
    let mut p = d.to_vec();
    let mut prev = p[n - 1];
    for level in 1..n {
        for i in 0..n - level {
            let (a, b) = (t[i], t[i + level]);
            p[i] = (b * p[i] - a * p[i + 1]) / (b - a);
        }
        if level < n - 1 {
            prev = p[n - level - 1];
        }
    }
    if n == 1 {
        return (p[0], f64::NAN);
    }
    (p[0], (p[0] - prev).abs())
}
