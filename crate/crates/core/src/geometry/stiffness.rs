//! Stiffness operators `S` approximating the Dirichlet form `∫ ∇φ·∇ψ dv`.
//!
//! Every variant annihilates the constant function bit-exactly: nodal
//! variants are applied in difference form `Σ c (f_x − f_y)`, and the
//! spectral variant has a zero entry on the constant mode.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::ksum;

/// Second-order periodic 7-point stencil on a 3-axis grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicStencil {
    shape: [usize; 3],
    /// Per-axis edge coefficient `dv / h_a²`.
    coeff: [f64; 3],
}

impl PeriodicStencil {
    pub fn new(shape: [usize; 3], coeff: [f64; 3]) -> Self {
        Self { shape, coeff }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn coefficients(&self) -> [f64; 3] {
        self.coeff
    }

    fn len(&self) -> usize {
        self.shape.iter().product()
    }

    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [n0, n1, n2] = self.shape;
        let [c0, c1, c2] = self.coeff;
        for i in 0..n0 {
            let ip = (i + 1) % n0;
            let im = (i + n0 - 1) % n0;
            for j in 0..n1 {
                let jp = (j + 1) % n1;
                let jm = (j + n1 - 1) % n1;
                for k in 0..n2 {
                    let kp = (k + 1) % n2;
                    let km = (k + n2 - 1) % n2;
                    let f = x[self.index(i, j, k)];
                    let d0 = (f - x[self.index(ip, j, k)]) + (f - x[self.index(im, j, k)]);
                    let d1 = (f - x[self.index(i, jp, k)]) + (f - x[self.index(i, jm, k)]);
                    let d2 = (f - x[self.index(i, j, kp)]) + (f - x[self.index(i, j, km)]);
                    y[self.index(i, j, k)] = c0 * d0 + c1 * d1 + c2 * d2;
                }
            }
        }
    }

    fn energy_terms(&self, x: &[f64]) -> Vec<f64> {
        let [n0, n1, n2] = self.shape;
        let [c0, c1, c2] = self.coeff;
        let mut out = Vec::with_capacity(3 * self.len());
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    let f = x[self.index(i, j, k)];
                    let d0 = f - x[self.index((i + 1) % n0, j, k)];
                    let d1 = f - x[self.index(i, (j + 1) % n1, k)];
                    let d2 = f - x[self.index(i, j, (k + 1) % n2)];
                    out.extend([c0 * d0 * d0, c1 * d1 * d1, c2 * d2 * d2]);
                }
            }
        }
        out
    }

    fn neighbors(&self, node: usize) -> [(usize, f64); 6] {
        let [n0, n1, n2] = self.shape;
        let k = node % n2;
        let j = (node / n2) % n1;
        let i = node / (n1 * n2);
        [
            (self.index((i + 1) % n0, j, k), self.coeff[0]),
            (self.index((i + n0 - 1) % n0, j, k), self.coeff[0]),
            (self.index(i, (j + 1) % n1, k), self.coeff[1]),
            (self.index(i, (j + n1 - 1) % n1, k), self.coeff[1]),
            (self.index(i, j, (k + 1) % n2), self.coeff[2]),
            (self.index(i, j, (k + n2 - 1) % n2), self.coeff[2]),
        ]
    }
}

/// Weighted graph Laplacian stored as symmetric non-negative edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphLaplacian {
    rows: Vec<Vec<(usize, f64)>>,
}

impl GraphLaplacian {
    /// Builds the operator from `(i, j, value)` entries of a symmetric
    /// matrix with zero row sums and non-positive off-diagonal entries.
    /// Diagonal entries are validated against the off-diagonal row sums
    /// and then discarded.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut dense_rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
        let mut diag = vec![0.0; n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Construction(format!("stiffness entry ({i}, {j}) outside {n} nodes")));
            }
            if !v.is_finite() {
                return Err(Error::Construction(format!("non-finite stiffness entry at ({i}, {j})")));
            }
            if i == j {
                diag[i] += v;
            } else {
                *dense_rows[i].entry(j).or_insert(0.0) += v;
            }
        }
        let mut rows = Vec::with_capacity(n);
        for (i, row) in dense_rows.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            let mut off_sum = 0.0;
            let mut scale = diag[i].abs();
            for (&j, &v) in row {
                let mirror = dense_rows[j].get(&i).copied().unwrap_or(0.0);
                if (v - mirror).abs() > 1e-12 * v.abs().max(mirror.abs()) {
                    return Err(Error::Construction(format!("stiffness is not symmetric at ({i}, {j})")));
                }
                if v > 0.0 {
                    return Err(Error::Construction(format!(
                        "stiffness off-diagonal ({i}, {j}) = {v} is positive; only graph Laplacians are supported"
                    )));
                }
                off_sum += v;
                scale = scale.max(v.abs());
                if v != 0.0 {
                    out.push((j, -v));
                }
            }
            if (diag[i] + off_sum).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::Construction(format!(
                    "stiffness row {i} does not sum to zero (diag {}, off-diagonal sum {off_sum})",
                    diag[i]
                )));
            }
            rows.push(out);
        }
        Ok(Self { rows })
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            let f = x[i];
            y[i] = row.iter().map(|&(j, c)| c * (f - x[j])).sum();
        }
    }
}

/// The stiffness operator of a discrete conformal class, acting on the
/// degrees of freedom of its discretization.
#[derive(Debug, Clone, PartialEq)]
pub enum Stiffness {
    Periodic(PeriodicStencil),
    Graph(GraphLaplacian),
    /// Diagonal in a spectral basis (entries are Laplace–Beltrami eigenvalues).
    Spectral(Vec<f64>),
}

impl Stiffness {
    pub fn dim(&self) -> usize {
        match self {
            Stiffness::Periodic(s) => s.len(),
            Stiffness::Graph(g) => g.rows.len(),
            Stiffness::Spectral(d) => d.len(),
        }
    }

    /// `y = S x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Stiffness::Periodic(s) => s.apply(x, y),
            Stiffness::Graph(g) => g.apply(x, y),
            Stiffness::Spectral(d) => {
                for ((yi, xi), di) in y.iter_mut().zip(x).zip(d) {
                    *yi = di * xi;
                }
            }
        }
    }

    pub fn apply_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        y
    }

    /// `xᵀ S x` as a compensated sum of non-negative edge terms, accurate to
    /// a few ulps even when `S x` suffers cancellation.
    pub fn energy(&self, x: &[f64]) -> f64 {
        match self {
            Stiffness::Periodic(s) => ksum(s.energy_terms(x)),
            Stiffness::Graph(g) => ksum(g.rows.iter().enumerate().flat_map(|(i, row)| {
                row.iter().filter(move |(j, _)| *j > i).map(move |&(j, c)| c * (x[i] - x[j]).powi(2))
            })),
            Stiffness::Spectral(d) => ksum(d.iter().zip(x).map(|(d, v)| d * v * v)),
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match self {
            Stiffness::Periodic(s) => {
                let d = 2.0 * (s.coeff[0] + s.coeff[1] + s.coeff[2]);
                vec![d; s.len()]
            }
            Stiffness::Graph(g) => g.rows.iter().map(|r| r.iter().map(|&(_, c)| c).sum()).collect(),
            Stiffness::Spectral(d) => d.clone(),
        }
    }

    /// Off-diagonal entries of row `i` as `(column, value)`.
    pub fn off_diagonal_row(&self, i: usize) -> Vec<(usize, f64)> {
        match self {
            Stiffness::Periodic(s) => {
                let mut acc: Vec<(usize, f64)> = Vec::with_capacity(6);
                for (j, c) in s.neighbors(i) {
                    match acc.iter_mut().find(|(k, _)| *k == j) {
                        Some(e) => e.1 -= c,
                        None => acc.push((j, -c)),
                    }
                }
                acc
            }
            Stiffness::Graph(g) => g.rows[i].iter().map(|&(j, c)| (j, -c)).collect(),
            Stiffness::Spectral(_) => Vec::new(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let diag = self.diagonal();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = diag[i];
            for (j, v) in self.off_diagonal_row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Whether the operator acts on node values (as opposed to spectral
    /// coefficients).
    pub fn is_nodal(&self) -> bool {
        !matches!(self, Stiffness::Spectral(_))
    }
}
