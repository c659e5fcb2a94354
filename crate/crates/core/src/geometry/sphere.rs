//! Round unit 3-sphere discretized by hyperspherical harmonics.
//!
//! Nodes come from a product quadrature in Hopf coordinates
//! `x = (√(1−s) cos ξ₁, √(1−s) sin ξ₁, √s cos ξ₂, √s sin ξ₂)`, where the
//! volume element is `½ ds dξ₁ dξ₂`. The angles use the trapezoid rule with
//! `2L+1` points and `s ∈ [0, 1]` uses Gauss–Legendre with `⌈(L+1)/2⌉`
//! points, which integrates every polynomial of degree `≤ 2L` in `x`
//! exactly. Products of two basis functions therefore have exact discrete
//! inner products, so the basis is orthonormal and the stiffness is
//! `diag(l(l+2))` with no quadrature error.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Backend, DiscreteConformalClass, Discretization, Stiffness};
use crate::error::{Error, Result};

/// Builds the round `S³` (scalar curvature 6) with harmonics of degree `≤ L`.
pub fn build_sphere3_class(degree_cutoff: usize) -> Result<DiscreteConformalClass> {
    let l_max = degree_cutoff;
    if l_max < 2 {
        return Err(Error::Construction(format!("sphere degree cutoff must be at least 2, got {l_max}")));
    }
    let n_angle = 2 * l_max + 1;
    let n_gauss = (l_max + 2) / 2;
    let (gx, gw) = gauss_legendre(n_gauss);

    let mut coords = Vec::new();
    let mut dv = Vec::new();
    let dxi = TAU / n_angle as f64;
    for (&t, &wt) in gx.iter().zip(&gw) {
        // map [-1, 1] to [0, 1]
        let s = 0.5 * (t + 1.0);
        let ws = 0.5 * wt;
        let (r1, r2) = ((1.0 - s).sqrt(), s.sqrt());
        for a in 0..n_angle {
            let (s1, c1) = (a as f64 * dxi).sin_cos();
            for b in 0..n_angle {
                let (s2, c2) = (b as f64 * dxi).sin_cos();
                coords.extend_from_slice(&[r1 * c1, r1 * s1, r2 * c2, r2 * s2]);
                dv.push(0.5 * ws * dxi * dxi);
            }
        }
    }
    let n_nodes = dv.len();

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut degrees = Vec::new();
    let mut stiffness = Vec::new();
    for l in 0..=l_max {
        let harmonics = harmonic_polynomials(l)?;
        let monos = monomials(l);
        let mut block = DMatrix::zeros(n_nodes, harmonics.ncols());
        for x in 0..n_nodes {
            let p = &coords[4 * x..4 * x + 4];
            let vals: Vec<f64> = monos.iter().map(|e| eval_monomial(e, p)).collect();
            for j in 0..harmonics.ncols() {
                block[(x, j)] = (0..monos.len()).map(|i| harmonics[(i, j)] * vals[i]).sum();
            }
        }
        let block = orthonormalize(&block, &dv)?;
        if block.ncols() != (l + 1) * (l + 1) {
            return Err(Error::Construction(format!(
                "degree {l} harmonic space has dimension {}, expected {}",
                block.ncols(),
                (l + 1) * (l + 1)
            )));
        }
        for j in 0..block.ncols() {
            columns.push(block.column(j).iter().copied().collect());
            degrees.push(l);
            stiffness.push((l * (l + 2)) as f64);
        }
    }
    let values = DMatrix::from_fn(n_nodes, columns.len(), |i, j| columns[j][i]);

    DiscreteConformalClass::new(
        3,
        dv,
        Stiffness::Spectral(stiffness),
        vec![6.0; n_nodes],
        Backend::Sphere3Spectral,
        coords,
        4,
        Discretization::Galerkin { values, degrees },
        Some(2.0 * PI * PI),
    )
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

fn monomials(l: usize) -> Vec<[usize; 4]> {
    let mut out = Vec::new();
    for a in (0..=l).rev() {
        for b in (0..=l - a).rev() {
            for c in (0..=l - a - b).rev() {
                out.push([a, b, c, l - a - b - c]);
            }
        }
    }
    out
}

fn eval_monomial(e: &[usize; 4], x: &[f64]) -> f64 {
    (0..4).map(|i| x[i].powi(e[i] as i32)).product()
}

/// Coefficients (in the degree-`l` monomial basis) of a basis of the
/// harmonic homogeneous polynomials of degree `l` in four variables.
fn harmonic_polynomials(l: usize) -> Result<DMatrix<f64>> {
    let monos = monomials(l);
    if l < 2 {
        return Ok(DMatrix::identity(monos.len(), monos.len()));
    }
    let lower: HashMap<[usize; 4], usize> = monomials(l - 2).into_iter().enumerate().map(|(i, e)| (e, i)).collect();
    let mut lap = DMatrix::<f64>::zeros(lower.len(), monos.len());
    for (j, e) in monos.iter().enumerate() {
        for i in 0..4 {
            if e[i] >= 2 {
                let mut f = *e;
                f[i] -= 2;
                lap[(lower[&f], j)] += (e[i] * (e[i] - 1)) as f64;
            }
        }
    }
    let gram = lap.transpose() * &lap;
    let eig = SymmetricEigen::new(gram);
    let scale: f64 = eig.eigenvalues.amax().max(1.0);
    let keep: Vec<usize> = (0..monos.len()).filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * scale).collect();
    Ok(DMatrix::from_fn(monos.len(), keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]))
}

/// Orthonormalizes columns in the discrete inner product `Σ f g dv`.
fn orthonormalize(block: &DMatrix<f64>, dv: &[f64]) -> Result<DMatrix<f64>> {
    let mut weighted = block.clone();
    for (mut row, &d) in weighted.row_iter_mut().zip(dv) {
        row *= d;
    }
    let gram = block.transpose() * weighted;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Construction("harmonic basis is rank deficient on the quadrature".into()))?;
    let l = chol.l();
    // Φ R⁻¹ with R = Lᵀ, i.e. solve X Lᵀ = Φ.
    let inv_lt = l
        .transpose()
        .try_inverse()
        .ok_or_else(|| Error::Construction("singular harmonic Gram factor".into()))?;
    Ok(block * inv_lt)
}
