//! Convex-hull certificates for extremality.
//!
//! With `V(x)` the values of a weighted-orthonormal basis of the cluster of
//! `λ_k` at node `x`, every unit eigenvector `Σ c_a V_a` gives the node
//! field `(cᵀV)²`, and their convex hull is `{V(x)ᵀ P V(x) : P ⪰ 0, tr P = 1}`.
//! The metric is extremal when the constant 1 lies in that hull. Sym(m) is
//! parametrized isometrically (diagonal entries, then `√2·P_ab` for `a < b`)
//! so Frobenius projections become Euclidean ones.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{pencil_scale, DEFAULT_SIGN_TOL};
use crate::geometry::{conformal_data, factor_mass, ConformalFactor, DiscreteConformalClass};
use crate::linalg::symmetric_eigh;
use crate::perturbation::{one_sided_f_derivatives_with_spectrum, zero_mean_generator, DeformationDirection, NORMALIZATION_TOL};
use crate::spectral::{spectrum_resolving, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyOptions {
    pub cert_tol: f64,
    /// Relative threshold for `λ_k ≈ 0`, see [`crate::functional::lambda1_sign`].
    pub sign_tol: f64,
    pub max_alternations: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { cert_tol: 1e-8, sign_tol: DEFAULT_SIGN_TOL, max_alternations: 5000 }
    }
}

/// Direction along which both one-sided derivatives of `F^k` share a sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatingWitness {
    pub h: DeformationDirection,
    /// Squared weighted distance from 1 to the hull; every derivative along
    /// `h` is at least `q·|λ_k|` times this.
    pub distance_sq: f64,
    pub f_right: f64,
    pub f_left: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityCertificate {
    pub k: usize,
    pub lambda_k: f64,
    pub cluster_start: usize,
    pub cluster_size: usize,
    /// The factor the certificate was computed for.
    pub mu_e: Vec<f64>,
    /// Coefficient matrix over the cluster basis, row-major.
    pub p_matrix: Vec<Vec<f64>>,
    pub p_eigenvalues: Vec<f64>,
    /// Node fields `v_j` with `Σ v_j² ≈ 1`.
    pub family: Vec<Vec<f64>>,
    pub sup_residual: f64,
    pub feasible: bool,
    pub cert_tol: f64,
    pub alternations: usize,
    pub witness: Option<SeparatingWitness>,
}

/// Decides whether `1 ∈ Conv{v² : v unit in the cluster of λ_k}`.
pub fn certify_extremal(
    class: &DiscreteConformalClass,
    mu_e: &ConformalFactor,
    k: usize,
    opts: &CertifyOptions,
    solver: &SolverOptions,
) -> Result<ExtremalityCertificate> {
    let mass = factor_mass(class, mu_e);
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { mass });
    }
    let spectrum = spectrum_resolving(class, mu_e, k, solver)?;
    let lambda = spectrum.lambda(k);
    if lambda.abs() <= opts.sign_tol * pencil_scale(class, mu_e)? {
        return Err(Error::ZeroEigenvalue { k, value: lambda });
    }
    let cluster = spectrum.cluster_of(k).clone();
    if k - 1 != cluster.start && k != cluster.end() {
        return Err(Error::NoGap { k, size: cluster.size });
    }
    let basis = &spectrum.eigenvectors[cluster.start..cluster.end()];
    let omega: Vec<f64> = conformal_data(class, mu_e)?.weight.iter().zip(class.dv()).map(|(w, d)| w * d).collect();
    let hull = Hull::new(basis, &omega);
    let (p, alternations) = hull.dykstra(opts.max_alternations, opts.cert_tol);
    let sup_residual = hull.sup_residual(&p);
    let feasible = sup_residual <= opts.cert_tol;

    let pm = unpack(&p, hull.m);
    let (sigma, u) = symmetric_eigh(pm.clone());
    let family: Vec<Vec<f64>> = (0..hull.m)
        .rev()
        .filter(|&j| sigma[j] >= 1e-12)
        .map(|j| {
            let s = sigma[j].sqrt();
            (0..omega.len()).map(|x| s * (0..hull.m).map(|a| u[(a, j)] * basis[a][x]).sum::<f64>()).collect()
        })
        .collect();

    let witness = if feasible {
        None
    } else {
        let phi_star = hull.nearest_hull_point();
        let d: Vec<f64> = phi_star.iter().map(|p| 1.0 - p).collect();
        let distance_sq = d.iter().zip(&omega).map(|(a, w)| a * a * w).sum();
        let g: Vec<f64> = d.iter().zip(mu_e.values()).map(|(d, m)| d / (m * m)).collect();
        let h = zero_mean_generator(class, mu_e, &g)?;
        let rep = one_sided_f_derivatives_with_spectrum(class, mu_e, &h, k, &spectrum)?;
        Some(SeparatingWitness { h, distance_sq, f_right: rep.f_right, f_left: rep.f_left })
    };

    Ok(ExtremalityCertificate {
        k,
        lambda_k: lambda,
        cluster_start: cluster.start,
        cluster_size: cluster.size,
        mu_e: mu_e.values().to_vec(),
        p_matrix: pm.row_iter().map(|r| r.iter().copied().collect()).collect(),
        p_eigenvalues: sigma,
        family,
        sup_residual,
        feasible,
        cert_tol: opts.cert_tol,
        alternations,
        witness,
    })
}

/// Quadratic images of the cluster basis in isometric coordinates.
struct Hull {
    m: usize,
    /// Column `c` holds the node field of coordinate `c`.
    b: DMatrix<f64>,
    /// `BᵀΩB`.
    gram: DMatrix<f64>,
    /// `BᵀΩ1`.
    rhs: DVector<f64>,
    /// Trace functional in coordinates.
    trace: DVector<f64>,
}

fn dim_sym(m: usize) -> usize {
    m * (m + 1) / 2
}

fn pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).map(|a| (a, a)).chain((0..m).flat_map(|a| (a + 1..m).map(move |b| (a, b)))).collect()
}

fn unpack(p: &DVector<f64>, m: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, m);
    for (c, (a, b)) in pairs(m).into_iter().enumerate() {
        if a == b {
            out[(a, a)] = p[c];
        } else {
            out[(a, b)] = p[c] / std::f64::consts::SQRT_2;
            out[(b, a)] = out[(a, b)];
        }
    }
    out
}

fn pack(pm: &DMatrix<f64>) -> DVector<f64> {
    let m = pm.nrows();
    DVector::from_iterator(
        dim_sym(m),
        pairs(m).into_iter().map(|(a, b)| if a == b { pm[(a, a)] } else { std::f64::consts::SQRT_2 * 0.5 * (pm[(a, b)] + pm[(b, a)]) }),
    )
}

fn psd_projection(p: &DVector<f64>, m: usize) -> DVector<f64> {
    let (vals, vecs) = symmetric_eigh(unpack(p, m));
    let clipped = DVector::from_iterator(m, vals.iter().map(|v| v.max(0.0)));
    pack(&(&vecs * DMatrix::from_diagonal(&clipped) * vecs.transpose()))
}

/// Euclidean projection onto the probability simplex.
fn simplex_projection(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn spectraplex_projection(p: &DVector<f64>, m: usize) -> DVector<f64> {
    let (vals, vecs) = symmetric_eigh(unpack(p, m));
    let proj = DVector::from_vec(simplex_projection(&vals));
    pack(&(&vecs * DMatrix::from_diagonal(&proj) * vecs.transpose()))
}

impl Hull {
    fn new(basis: &[Vec<f64>], omega: &[f64]) -> Self {
        let m = basis.len();
        let n = omega.len();
        let d = dim_sym(m);
        let mut b = DMatrix::zeros(n, d);
        for (c, (i, j)) in pairs(m).into_iter().enumerate() {
            let s = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            for x in 0..n {
                b[(x, c)] = s * basis[i][x] * basis[j][x];
            }
        }
        let om = DVector::from_column_slice(omega);
        let mut wb = b.clone();
        for (mut row, w) in wb.row_iter_mut().zip(omega) {
            row *= *w;
        }
        let gram = b.transpose() * &wb;
        let rhs = b.transpose() * &om;
        let trace = DVector::from_iterator(d, pairs(m).into_iter().map(|(a, b)| if a == b { 1.0 } else { 0.0 }));
        Self { m, b, gram, rhs, trace }
    }

    fn sup_residual(&self, p: &DVector<f64>) -> f64 {
        (&self.b * p).iter().fold(0.0, |m, v| m.max((v - 1.0).abs()))
    }

    /// Least-squares point with unit trace, and an orthonormal basis of the
    /// directions that change neither the fit nor the trace.
    fn affine_set(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.gram.nrows();
        let mut kkt = DMatrix::zeros(d + 1, d + 1);
        kkt.view_mut((0, 0), (d, d)).copy_from(&self.gram);
        kkt.view_mut((0, d), (d, 1)).copy_from(&self.trace);
        kkt.view_mut((d, 0), (1, d)).copy_from(&self.trace.transpose());
        let mut rhs = DVector::zeros(d + 1);
        rhs.rows_mut(0, d).copy_from(&self.rhs);
        rhs[d] = 1.0;
        let svd = kkt.svd(true, true);
        let sol = svd.solve(&rhs, 1e-12 * svd.singular_values.max()).expect("SVD with both factors");
        let p_ls = sol.rows(0, d).into_owned();

        let h = &self.gram + &self.trace * self.trace.transpose();
        let (vals, vecs) = symmetric_eigh(h);
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let null: Vec<usize> = (0..d).filter(|&i| vals[i].abs() <= 1e-10 * scale).collect();
        let n = DMatrix::from_fn(d, null.len(), |r, c| vecs[(r, null[c])]);
        (p_ls, n)
    }

    /// Dykstra alternation between the affine set and the PSD cone. Returns
    /// a trace-one PSD point and the number of alternations.
    fn dykstra(&self, max_iter: usize, tol: f64) -> (DVector<f64>, usize) {
        let (p_ls, n) = self.affine_set();
        let m = self.m;
        let to_affine = |x: &DVector<f64>| -> DVector<f64> { &p_ls + &n * (n.transpose() * (x - &p_ls)) };
        let finish = |x: &DVector<f64>| -> DVector<f64> {
            let t = self.trace.dot(x);
            if t > 0.0 {
                x / t
            } else {
                x.clone()
            }
        };
        let mut x = psd_projection(&p_ls, m);
        let mut best = finish(&x);
        let mut best_res = self.sup_residual(&best);
        if n.ncols() == 0 || best_res <= 0.1 * tol {
            return (best, 1);
        }
        let mut p = DVector::zeros(x.len());
        let mut q = DVector::zeros(x.len());
        let mut since = 0;
        for it in 1..=max_iter {
            let y = to_affine(&(&x + &p));
            p = &x + &p - &y;
            let xn = psd_projection(&(&y + &q), m);
            q = &y + &q - &xn;
            x = xn;
            let cand = finish(&x);
            let r = self.sup_residual(&cand);
            if r < best_res * (1.0 - 1e-6) {
                best_res = r;
                best = cand;
                since = 0;
            } else {
                since += 1;
            }
            if best_res <= 0.1 * tol || since >= 200 {
                return (best, it);
            }
        }
        (best, max_iter)
    }

    /// Node field of the hull point closest to 1 in `L²(ω)`, by FISTA on
    /// the spectraplex.
    fn nearest_hull_point(&self) -> DVector<f64> {
        let m = self.m;
        let d = dim_sym(m);
        let (gv, _) = symmetric_eigh(self.gram.clone());
        let lip = 2.0 * gv.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
        let mut x = spectraplex_projection(&(&self.trace / m as f64), m);
        let mut y = x.clone();
        let mut t = 1.0_f64;
        for _ in 0..20000 {
            let grad = (&self.gram * &y - &self.rhs) * 2.0;
            let xn = spectraplex_projection(&(&y - grad / lip), m);
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &xn + (&xn - &x) * ((t - 1.0) / tn);
            let step = (&xn - &x).norm();
            x = xn;
            t = tn;
            if step <= 1e-15 * d as f64 {
                break;
            }
        }
        &self.b * x
    }
}
