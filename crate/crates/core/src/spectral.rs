//! The weighted eigenvalue pencil of the conformal Laplacian.
//!
//! For a factor `μ` with `w = μ^q` the eigenvalues of the conformal
//! Laplacian of `μ^q g` are those of `A v = λ M_w v`, where
//! `A = S + c_n·diag(dv∘R)` and `M_w = diag(w∘dv)`. Eigenvectors are
//! returned in the `v = μu` variables and are orthonormal for
//! `⟨v, v'⟩_w = Σ v v' w dv`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{conformal_data, ConformalFactor, DiscreteConformalClass, Discretization};
use crate::linalg::{davidson, ksum, generalized_eigh, DavidsonOptions, LinearOperator, Mass};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Bound on the normwise backward error
    /// `‖Av − λM_w v‖ / ((‖A‖ + |λ|·‖M_w‖)·‖v‖)` of every returned pair.
    /// Norms of the matrices are Gershgorin bounds.
    pub solver_tol: f64,
    /// Relative gap below which neighbouring eigenvalues form one cluster.
    pub cluster_tol: f64,
    /// Largest number of degrees of freedom solved densely.
    pub dense_threshold: usize,
    pub max_iterations: usize,
    /// Accepted for interface stability; solves are always single-threaded
    /// and deterministic.
    pub reproducible: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { solver_tol: 1e-9, cluster_tol: 1e-7, dense_threshold: 4000, max_iterations: 1000, reproducible: true }
    }
}

/// The operator `A = S + c_n·diag(dv∘R)` on the degrees of freedom.
#[derive(Debug, Clone)]
pub struct ConformalOperator<'a> {
    class: &'a DiscreteConformalClass,
    /// `c_n·dv∘R` at the nodes.
    potential: Vec<f64>,
    /// Full matrix for Galerkin classes.
    galerkin: Option<DMatrix<f64>>,
}

pub fn assemble_operator(class: &DiscreteConformalClass) -> ConformalOperator<'_> {
    let potential: Vec<f64> = class.dv().iter().zip(class.curvature()).map(|(d, r)| class.c_n() * d * r).collect();
    let galerkin = match class.discretization() {
        Discretization::Nodal => None,
        Discretization::Galerkin { values, .. } => {
            let mut a = project_diagonal(values, &potential);
            let k = class.stiffness().diagonal();
            for (i, ki) in k.iter().enumerate() {
                a[(i, i)] += ki;
            }
            Some(a)
        }
    };
    ConformalOperator { class, potential, galerkin }
}

/// `Φᵀ diag(d) Φ`.
fn project_diagonal(values: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut weighted = values.clone();
    for (mut row, di) in weighted.row_iter_mut().zip(d) {
        row *= *di;
    }
    let m = values.transpose() * weighted;
    (&m + m.transpose()) * 0.5
}

impl ConformalOperator<'_> {
    pub fn dim(&self) -> usize {
        self.class.num_dofs()
    }

    /// `y = A x` on degrees of freedom.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        match &self.galerkin {
            None => {
                self.class.stiffness().apply(x, y);
                for ((yi, xi), p) in y.iter_mut().zip(x).zip(&self.potential) {
                    *yi += p * xi;
                }
            }
            Some(a) => {
                let r = a * DVector::from_column_slice(x);
                y.copy_from_slice(r.as_slice());
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.galerkin {
            Some(a) => a.clone(),
            None => {
                let mut a = self.class.stiffness().to_dense();
                for (i, p) in self.potential.iter().enumerate() {
                    a[(i, i)] += p;
                }
                a
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match &self.galerkin {
            Some(a) => a.diagonal().as_slice().to_vec(),
            None => self.class.stiffness().diagonal().iter().zip(&self.potential).map(|(s, p)| s + p).collect(),
        }
    }

    /// Largest absolute row sum (a bound on `‖A‖₂`).
    pub fn gershgorin_bound(&self) -> f64 {
        match &self.galerkin {
            Some(a) => a.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
            None => {
                let diag = self.diagonal();
                (0..self.dim())
                    .map(|i| {
                        diag[i].abs() + self.class.stiffness().off_diagonal_row(i).iter().map(|(_, v)| v.abs()).sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    /// `c_n·dv∘R`, the node values of `A·1` on nodal classes.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }
}

/// The weighted mass `M_w` on degrees of freedom.
#[derive(Debug, Clone)]
pub enum WeightedMass {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl WeightedMass {
    pub fn new(class: &DiscreteConformalClass, weight: &[f64]) -> Self {
        let wd: Vec<f64> = weight.iter().zip(class.dv()).map(|(w, d)| w * d).collect();
        match class.discretization() {
            Discretization::Nodal => WeightedMass::Diagonal(wd),
            Discretization::Galerkin { values, .. } => WeightedMass::Dense(project_diagonal(values, &wd)),
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        match self {
            WeightedMass::Diagonal(d) => x.iter().zip(d).map(|(a, b)| a * b).collect(),
            WeightedMass::Dense(m) => (m * DVector::from_column_slice(x)).as_slice().to_vec(),
        }
    }

    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        self.apply_vec(x).iter().zip(y).map(|(a, b)| a * b).sum()
    }

    /// Largest absolute row sum.
    pub fn gershgorin_bound(&self) -> f64 {
        match self {
            WeightedMass::Diagonal(d) => d.iter().fold(0.0, |m, x| m.max(x.abs())),
            WeightedMass::Dense(m) => m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max),
        }
    }
}

/// A maximal run of eigenvalues within the relative cluster tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Zero-based index of the first eigenvalue.
    pub start: usize,
    pub size: usize,
    /// Mean of the member eigenvalues.
    pub value: f64,
    /// Distance to the previous eigenvalue; `None` at the bottom of the spectrum.
    pub gap_below: Option<f64>,
    /// Distance to the next eigenvalue when it is known.
    pub gap_above: Option<f64>,
    /// Whether the cluster is known to be complete: the next eigenvalue was
    /// computed and lies outside, or there is none.
    pub closed: bool,
}

impl Cluster {
    pub fn end(&self) -> usize {
        self.start + self.size
    }

    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end()).contains(&index)
    }
}

/// Groups ascending eigenvalues into maximal clusters; consecutive values
/// join when `λ_{i+1} − λ_i ≤ tol·(1 + |λ_i|)`.
///
/// `next` is the eigenvalue following the last entry, if known, and
/// `exhausted` says the list is the whole spectrum.
pub fn cluster_eigenvalues(eigenvalues: &[f64], cluster_tol: f64, next: Option<f64>, exhausted: bool) -> Vec<Cluster> {
    let close = |a: f64, b: f64| (b - a).abs() <= cluster_tol * (1.0 + a.abs());
    let mut out = Vec::new();
    let mut start = 0;
    while start < eigenvalues.len() {
        let mut end = start + 1;
        while end < eigenvalues.len() && close(eigenvalues[end - 1], eigenvalues[end]) {
            end += 1;
        }
        let members = &eigenvalues[start..end];
        let gap_below = (start > 0).then(|| eigenvalues[start] - eigenvalues[start - 1]);
        let (gap_above, closed) = if end < eigenvalues.len() {
            (Some(eigenvalues[end] - eigenvalues[end - 1]), true)
        } else if let Some(nx) = next {
            let last = eigenvalues[end - 1];
            (Some(nx - last), !close(last, nx))
        } else {
            (None, exhausted)
        };
        out.push(Cluster {
            start,
            size: end - start,
            value: members.iter().sum::<f64>() / members.len() as f64,
            gap_below,
            gap_above,
            closed,
        });
        start = end;
    }
    out
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Ascending, repeated by multiplicity.
    pub eigenvalues: Vec<f64>,
    /// Node values of the eigenvectors (`v = μu`).
    pub eigenvectors: Vec<Vec<f64>>,
    /// Degree-of-freedom vectors (equal to node values on nodal classes).
    pub coefficients: Vec<Vec<f64>>,
    pub clusters: Vec<Cluster>,
    /// Normwise backward error of each pair, see [`SolverOptions::solver_tol`].
    pub residuals: Vec<f64>,
    /// `max |⟨v_i, v_j⟩_w − δ_ij|`.
    pub orthonormality_error: f64,
    /// The eigenvalue after the last returned one, if it was computed.
    pub next_eigenvalue: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl SpectrumResult {
    /// `λ_k` with `k` one-based.
    pub fn lambda(&self, k: usize) -> f64 {
        self.eigenvalues[k - 1]
    }

    /// Cluster containing `λ_k` (one-based).
    pub fn cluster_of(&self, k: usize) -> &Cluster {
        self.clusters.iter().find(|c| c.contains(k - 1)).expect("k within computed range")
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// First `k_max` eigenpairs of the pencil for `μ`.
pub fn solve_pencil(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    k_max: usize,
    opts: &SolverOptions,
) -> Result<SpectrumResult> {
    solve_pencil_warm(class, mu, k_max, opts, &[])
}

/// Like [`solve_pencil`], seeding the iterative solver with approximate
/// eigenvectors (degree-of-freedom vectors). Guesses are ignored by the
/// dense path.
pub fn solve_pencil_warm(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    k_max: usize,
    opts: &SolverOptions,
    guesses: &[Vec<f64>],
) -> Result<SpectrumResult> {
    let n = class.num_dofs();
    if k_max == 0 || k_max > n {
        return Err(Error::TooManyEigenpairs { requested: k_max, available: n });
    }
    let data = conformal_data(class, mu)?;
    let op = assemble_operator(class);
    let mass = WeightedMass::new(class, &data.weight);
    let want = (k_max + 1).min(n);

    let (values, mut coeffs, iterations) = if n <= opts.dense_threshold {
        let a = op.to_dense();
        let (values, vectors) = match &mass {
            WeightedMass::Diagonal(d) => generalized_eigh(&a, Mass::Diagonal(d))?,
            WeightedMass::Dense(m) => generalized_eigh(&a, Mass::Dense(m))?,
        };
        let coeffs: Vec<Vec<f64>> = (0..want).map(|j| vectors.column(j).iter().copied().collect()).collect();
        (values[..want].to_vec(), coeffs, 0)
    } else {
        let WeightedMass::Diagonal(d) = &mass else {
            return Err(Error::NotApplicable(format!(
                "{n} Galerkin degrees of freedom exceed the dense threshold {}",
                opts.dense_threshold
            )));
        };
        iterative(&op, class, &data.weight, d, want, opts, guesses)?
    };

    let next_eigenvalue = (want > k_max).then(|| values[k_max]);
    coeffs.truncate(k_max);
    let eigenvalues = values[..k_max].to_vec();

    let wdv: Vec<f64> = data.weight.iter().zip(class.dv()).map(|(w, d)| w * d).collect();
    let a_scale = op.gershgorin_bound();
    let m_scale = mass.gershgorin_bound();
    let mut eigenvectors = Vec::with_capacity(k_max);
    let mut residuals = Vec::with_capacity(k_max);
    for (c, &lam) in coeffs.iter_mut().zip(&eigenvalues) {
        let mut v = class.to_nodes(c);
        let s: f64 = v.iter().zip(&wdv).map(|(a, b)| a * b).sum();
        let spread: f64 = v.iter().zip(&wdv).map(|(a, b)| a.abs() * b).sum();
        let flip = if s.abs() > 1e-8 * spread {
            s < 0.0
        } else {
            let imax = v.iter().enumerate().fold(0, |m, (i, x)| if x.abs() > v[m].abs() { i } else { m });
            v[imax] < 0.0
        };
        if flip {
            c.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let ac = op.apply_vec(c);
        let mc = mass.apply_vec(c);
        let r: f64 = ac.iter().zip(&mc).map(|(a, m)| (a - lam * m).powi(2)).sum::<f64>().sqrt();
        let cn: f64 = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        residuals.push(r / ((a_scale + lam.abs() * m_scale) * cn));
        eigenvectors.push(v);
    }

    let mut ortho: f64 = 0.0;
    let mc: Vec<Vec<f64>> = coeffs.iter().map(|c| mass.apply_vec(c)).collect();
    for i in 0..k_max {
        for j in 0..=i {
            let g: f64 = coeffs[i].iter().zip(&mc[j]).map(|(a, b)| a * b).sum();
            ortho = ortho.max((g - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }

    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if worst > opts.solver_tol {
        return Err(Error::NoConvergence { iterations, residual: worst, target: opts.solver_tol });
    }

    let clusters = cluster_eigenvalues(&eigenvalues, opts.cluster_tol, next_eigenvalue, k_max == n);
    let mut diagnostics = Vec::new();
    if let Some(first) = clusters.first() {
        if first.size > 1 || !first.closed {
            diagnostics.push(format!(
                "lambda_1 is not resolved as simple: cluster of size {}{}",
                first.size,
                if first.closed { "" } else { " (possibly larger)" }
            ));
        }
    }
    if ortho > 1e-10 {
        diagnostics.push(format!("weighted orthonormality error {ortho:.3e}"));
    }
    Ok(SpectrumResult {
        eigenvalues,
        eigenvectors,
        coefficients: coeffs,
        clusters,
        residuals,
        orthonormality_error: ortho,
        next_eigenvalue,
        diagnostics,
    })
}

/// Rayleigh quotient `cᵀAc / cᵀM_w c` of a coefficient vector, with the
/// stiffness part in energy form and compensated sums throughout.
pub fn rayleigh_quotient(class: &DiscreteConformalClass, mu: &ConformalFactor, coeffs: &[f64]) -> Result<f64> {
    if coeffs.len() != class.num_dofs() {
        return Err(Error::LengthMismatch { expected: class.num_dofs(), actual: coeffs.len() });
    }
    let data = conformal_data(class, mu)?;
    let v = class.to_nodes(coeffs);
    let cn = class.c_n();
    let pot = ksum(v.iter().zip(class.curvature()).zip(class.dv()).map(|((x, r), d)| cn * r * d * x * x));
    let num = class.stiffness().energy(coeffs) + pot;
    let den = ksum(v.iter().zip(&data.weight).zip(class.dv()).map(|((x, w), d)| w * d * x * x));
    Ok(num / den)
}

/// Eigenpairs up to and including the complete cluster of `λ_k`.
pub fn spectrum_resolving(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    k: usize,
    opts: &SolverOptions,
) -> Result<SpectrumResult> {
    spectrum_resolving_warm(class, mu, k, opts, &[])
}

pub fn spectrum_resolving_warm(
    class: &DiscreteConformalClass,
    mu: &ConformalFactor,
    k: usize,
    opts: &SolverOptions,
    guesses: &[Vec<f64>],
) -> Result<SpectrumResult> {
    let n = class.num_dofs();
    if k == 0 || k > n {
        return Err(Error::TooManyEigenpairs { requested: k, available: n });
    }
    let mut kk = k;
    loop {
        let res = solve_pencil_warm(class, mu, kk, opts, guesses)?;
        let c = res.cluster_of(k);
        if c.closed {
            return Ok(res);
        }
        kk = (2 * kk).max(c.end() + 1).min(n);
    }
}

struct ScaledPencil<'a> {
    op: &'a ConformalOperator<'a>,
    /// `M^{-1/2}` diagonal.
    s: Vec<f64>,
}

impl LinearOperator for ScaledPencil<'_> {
    fn dim(&self) -> usize {
        self.s.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let sx: Vec<f64> = x.iter().zip(&self.s).map(|(a, b)| a * b).collect();
        self.op.apply(&sx, y);
        for (yi, si) in y.iter_mut().zip(&self.s) {
            *yi *= si;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        self.op.diagonal().iter().zip(&self.s).map(|(a, s)| a * s * s).collect()
    }
}

fn iterative(
    op: &ConformalOperator<'_>,
    class: &DiscreteConformalClass,
    weight: &[f64],
    mass: &[f64],
    nev: usize,
    opts: &SolverOptions,
    guesses: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>, usize)> {
    let n = mass.len();
    let s: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let sqrt_m: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
    let scaled = ScaledPencil { op, s: s.clone() };

    // Rayleigh quotients are bounded below by min c_n R / w because S ⪰ 0.
    let lower = class.curvature().iter().zip(weight).map(|(r, w)| class.c_n() * r / w).fold(f64::INFINITY, f64::min);
    let diag = scaled.diagonal();
    let rho = (0..n)
        .map(|i| {
            let off: f64 = class.stiffness().off_diagonal_row(i).iter().map(|(j, v)| v.abs() * s[i] * s[*j]).sum();
            diag[i].abs() + off
        })
        .fold(0.0, f64::max);
    let mut sorted_diag = diag.clone();
    sorted_diag.sort_by(f64::total_cmp);
    let typical = sorted_diag[n / 2].abs();
    let delta = (0.1 * lower.abs()).max(1e-3 * typical);
    let shift = lower - delta;

    let block = nev + 3;
    let mut start: Vec<Vec<f64>> = guesses.iter().take(block).map(|g| g.iter().zip(&sqrt_m).map(|(a, b)| a * b).collect()).collect();
    start.push(sqrt_m.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    while start.len() < block + 1 {
        start.push((0..n).map(|_| rng.random::<f64>() - 0.5).collect());
    }

    let dopts = DavidsonOptions {
        nev,
        block,
        max_basis: (6 * block).max(24),
        target: 1e-13 * rho,
        max_iterations: opts.max_iterations,
        shift,
        floor: 1e-10 * rho,
        inner_tol: 1e-2,
        inner_max: 300,
    };
    let res = davidson(&scaled, start, &dopts)?;
    log::debug!("davidson converged in {} iterations", res.iterations);
    let coeffs = res.vectors.iter().map(|x| x.iter().zip(&s).map(|(a, b)| a * b).collect()).collect();
    Ok((res.values, coeffs, res.iterations))
}
