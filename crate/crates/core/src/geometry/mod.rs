//! Discrete conformal classes and conformal factors.
//!
//! A class is fully described by the background data `(S, dv, R, n)`: a
//! stiffness operator, volume quadrature weights, a scalar-curvature node
//! field and the dimension. A metric in the class is `μ^{4/(n-2)} g` for a
//! positive node field `μ`.

mod expr;
mod sphere;
mod stiffness;
mod synthetic;
mod torus;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use expr::Expr;
pub use sphere::build_sphere3_class;
pub use stiffness::{GraphLaplacian, PeriodicStencil, Stiffness};
pub use synthetic::{build_synthetic_class, cycle_stiffness};
pub use torus::build_torus_class;

use crate::error::{Error, Result};
use crate::linalg::ksum;

/// Default lower bound for admissible conformal factors.
pub const DEFAULT_MU_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    TorusFd,
    Sphere3Spectral,
    Synthetic,
}

impl Backend {
    pub fn tag(&self) -> &'static str {
        match self {
            Backend::TorusFd => "torus_fd",
            Backend::Sphere3Spectral => "sphere3_spectral",
            Backend::Synthetic => "synthetic",
        }
    }
}

/// How degrees of freedom relate to nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Discretization {
    /// One degree of freedom per node.
    Nodal,
    /// Degrees of freedom are coefficients of an `L²(dv)`-orthonormal basis
    /// whose values at the quadrature nodes are the columns of `values`.
    Galerkin { values: DMatrix<f64>, degrees: Vec<usize> },
}

/// A scalar node field given as a constant or a closed-form expression.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldSpec {
    Constant(f64),
    Expr(Expr),
}

impl FieldSpec {
    /// Parses an expression, collapsing coordinate-free input to a constant.
    pub fn parse(source: &str) -> Result<Self> {
        let e = Expr::parse(source)?;
        Ok(match e.as_constant() {
            Some(c) => FieldSpec::Constant(c),
            None => FieldSpec::Expr(e),
        })
    }
}

impl From<f64> for FieldSpec {
    fn from(c: f64) -> Self {
        FieldSpec::Constant(c)
    }
}

/// A discretized closed manifold with a fixed background metric.
#[derive(Debug, Clone)]
pub struct DiscreteConformalClass {
    dim: usize,
    dv: Vec<f64>,
    stiffness: Stiffness,
    curvature: Vec<f64>,
    c_n: f64,
    q: f64,
    backend: Backend,
    /// Node coordinates, `coord_dim` values per node.
    coords: Vec<f64>,
    coord_dim: usize,
    discretization: Discretization,
    /// Analytic total volume when the backend knows it.
    analytic_volume: Option<f64>,
}

impl DiscreteConformalClass {
    pub(crate) fn new(
        dim: usize,
        dv: Vec<f64>,
        stiffness: Stiffness,
        curvature: Vec<f64>,
        backend: Backend,
        coords: Vec<f64>,
        coord_dim: usize,
        discretization: Discretization,
        analytic_volume: Option<f64>,
    ) -> Result<Self> {
        if dim < 3 {
            return Err(Error::Construction(format!("dimension must be at least 3, got {dim}")));
        }
        let n = dv.len();
        if n == 0 {
            return Err(Error::Construction("empty node set".into()));
        }
        if let Some((i, v)) = dv.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::Construction(format!("volume weight at node {i} is {v}")));
        }
        if curvature.len() != n {
            return Err(Error::LengthMismatch { expected: n, actual: curvature.len() });
        }
        if curvature.iter().any(|r| !r.is_finite()) {
            return Err(Error::Construction("non-finite curvature value".into()));
        }
        if coord_dim > 0 && coords.len() != n * coord_dim {
            return Err(Error::LengthMismatch { expected: n * coord_dim, actual: coords.len() });
        }
        let dofs = match &discretization {
            Discretization::Nodal => n,
            Discretization::Galerkin { values, degrees } => {
                if values.nrows() != n || degrees.len() != values.ncols() {
                    return Err(Error::Construction("basis table does not match node count".into()));
                }
                values.ncols()
            }
        };
        if stiffness.dim() != dofs {
            return Err(Error::LengthMismatch { expected: dofs, actual: stiffness.dim() });
        }
        let nf = dim as f64;
        Ok(Self {
            dim,
            dv,
            stiffness,
            curvature,
            c_n: (nf - 2.0) / (4.0 * (nf - 1.0)),
            q: 4.0 / (nf - 2.0),
            backend,
            coords,
            coord_dim,
            discretization,
            analytic_volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(n-2) / (4(n-1))`.
    pub fn c_n(&self) -> f64 {
        self.c_n
    }

    /// The conformal exponent `4/(n-2)`.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// The volume exponent `2n/(n-2) = 2 + q`.
    pub fn volume_exponent(&self) -> f64 {
        2.0 * self.dim as f64 / (self.dim as f64 - 2.0)
    }

    pub fn num_nodes(&self) -> usize {
        self.dv.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.stiffness.dim()
    }

    pub fn dv(&self) -> &[f64] {
        &self.dv
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn stiffness(&self) -> &Stiffness {
        &self.stiffness
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn discretization(&self) -> &Discretization {
        &self.discretization
    }

    pub fn is_nodal(&self) -> bool {
        matches!(self.discretization, Discretization::Nodal)
    }

    pub fn total_volume(&self) -> f64 {
        self.dv.iter().sum()
    }

    pub fn analytic_volume(&self) -> Option<f64> {
        self.analytic_volume
    }

    /// Coordinates of a node (empty for coordinate-free synthetic classes).
    pub fn coordinates(&self, node: usize) -> &[f64] {
        &self.coords[node * self.coord_dim..(node + 1) * self.coord_dim]
    }

    pub fn coordinate_dim(&self) -> usize {
        self.coord_dim
    }

    /// `Σ f·dv`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.dv).map(|(a, b)| a * b).sum()
    }

    /// Evaluates a field at every node.
    pub fn sample_field(&self, spec: &FieldSpec) -> Result<Vec<f64>> {
        match spec {
            FieldSpec::Constant(c) => Ok(vec![*c; self.num_nodes()]),
            FieldSpec::Expr(e) => {
                if e.arity() > self.coord_dim {
                    return Err(Error::Expression(format!(
                        "{:?} reads x{} but {} nodes have {} coordinates",
                        e.source(),
                        e.arity(),
                        self.backend.tag(),
                        self.coord_dim
                    )));
                }
                Ok((0..self.num_nodes()).map(|i| e.eval(self.coordinates(i))).collect())
            }
        }
    }

    /// Replaces the scalar-curvature field (synthetic curvature).
    pub fn with_curvature(&self, curvature: Vec<f64>) -> Result<Self> {
        if curvature.len() != self.num_nodes() {
            return Err(Error::LengthMismatch { expected: self.num_nodes(), actual: curvature.len() });
        }
        if curvature.iter().any(|r| !r.is_finite()) {
            return Err(Error::Construction("non-finite curvature value".into()));
        }
        let mut out = self.clone();
        out.curvature = curvature;
        Ok(out)
    }

    /// Node values of a degree-of-freedom vector.
    pub fn to_nodes(&self, coeffs: &[f64]) -> Vec<f64> {
        match &self.discretization {
            Discretization::Nodal => coeffs.to_vec(),
            Discretization::Galerkin { values, .. } => (values * DVector::from_column_slice(coeffs)).as_slice().to_vec(),
        }
    }

    /// `L²(dv)` projection of a node field onto the discrete space.
    pub fn project_to_dofs(&self, f: &[f64]) -> Vec<f64> {
        match &self.discretization {
            Discretization::Nodal => f.to_vec(),
            Discretization::Galerkin { values, .. } => {
                let weighted = DVector::from_iterator(f.len(), f.iter().zip(&self.dv).map(|(a, b)| a * b));
                (values.transpose() * weighted).as_slice().to_vec()
            }
        }
    }

    /// Degree-of-freedom vector of the constant function 1.
    pub fn constant_dofs(&self) -> Vec<f64> {
        self.project_to_dofs(&vec![1.0; self.num_nodes()])
    }

    /// Pointwise background Laplacian `Δ_g f` (a negative operator).
    ///
    /// Nodal: `−(S f)/dv`. Galerkin: the field is projected onto the basis,
    /// the stiffness applied and the result evaluated at the nodes.
    pub fn node_laplacian(&self, f: &[f64]) -> Vec<f64> {
        match &self.discretization {
            Discretization::Nodal => {
                let sf = self.stiffness.apply_vec(f);
                sf.iter().zip(&self.dv).map(|(s, d)| -s / d).collect()
            }
            Discretization::Galerkin { .. } => {
                let c = self.project_to_dofs(f);
                let sc = self.stiffness.apply_vec(&c);
                self.to_nodes(&sc).into_iter().map(|v| -v).collect()
            }
        }
    }

    /// Pointwise gradient energy density `|∇f|²`, recovered from the
    /// stiffness form as `½Δ(f²) − fΔf`.
    pub fn gradient_energy(&self, f: &[f64]) -> Vec<f64> {
        let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
        let lap_sq = self.node_laplacian(&sq);
        let lap = self.node_laplacian(f);
        (0..f.len()).map(|i| 0.5 * lap_sq[i] - f[i] * lap[i]).collect()
    }

    /// Summary used by reports to identify a backend instance.
    pub fn checksum(&self) -> ClassChecksum {
        let grid = match &self.stiffness {
            Stiffness::Periodic(p) => Some(p.shape()),
            _ => None,
        };
        let degree_cutoff = match &self.discretization {
            Discretization::Galerkin { degrees, .. } => degrees.iter().max().copied(),
            Discretization::Nodal => None,
        };
        ClassChecksum {
            backend: self.backend,
            dim: self.dim,
            nodes: self.num_nodes(),
            dofs: self.num_dofs(),
            grid,
            degree_cutoff,
            total_volume: self.total_volume(),
            total_curvature: self.integrate(&self.curvature),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassChecksum {
    pub backend: Backend,
    pub dim: usize,
    pub nodes: usize,
    pub dofs: usize,
    pub grid: Option<[usize; 3]>,
    pub degree_cutoff: Option<usize>,
    pub total_volume: f64,
    pub total_curvature: f64,
}

/// A strictly positive node field `μ` defining the metric `μ^{4/(n-2)} g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConformalFactor(Vec<f64>);

impl ConformalFactor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_floor(values, DEFAULT_MU_FLOOR)
    }

    /// Validates every value against `floor`; values below it are rejected.
    pub fn with_floor(values: Vec<f64>, floor: f64) -> Result<Self> {
        if let Some((node, &value)) = values.iter().enumerate().find(|(_, v)| !(**v >= floor && v.is_finite())) {
            return Err(Error::InvalidFactor { node, value, floor });
        }
        Ok(Self(values))
    }

    pub fn constant(class: &DiscreteConformalClass, value: f64) -> Result<Self> {
        Self::new(vec![value; class.num_nodes()])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|m| m * c).collect())
    }

    pub(crate) fn check_len(&self, class: &DiscreteConformalClass) -> Result<()> {
        if self.len() != class.num_nodes() {
            return Err(Error::LengthMismatch { expected: class.num_nodes(), actual: self.len() });
        }
        Ok(())
    }
}

/// Node fields derived from a conformal factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalData {
    /// `w = μ^{4/(n-2)}`, the density of the weighted mass.
    pub weight: Vec<f64>,
    /// `μ^{2n/(n-2)} dv`, the volume weights of the conformal metric.
    pub vol_tilde: Vec<f64>,
}

pub fn conformal_data(class: &DiscreteConformalClass, mu: &ConformalFactor) -> Result<ConformalData> {
    mu.check_len(class)?;
    let q = class.q();
    let p = class.volume_exponent();
    let weight = mu.values().iter().map(|m| m.powf(q)).collect();
    let vol_tilde = mu.values().iter().zip(class.dv()).map(|(m, d)| m.powf(p) * d).collect();
    Ok(ConformalData { weight, vol_tilde })
}

/// `Σ μ^q dv`, the volume of `μ^q g`.
pub fn factor_mass(class: &DiscreteConformalClass, mu: &ConformalFactor) -> f64 {
    let q = class.q();
    ksum(mu.values().iter().zip(class.dv()).map(|(m, d)| m.powf(q) * d))
}

/// Rescales `μ` so that `Σ μ^q dv = 1`.
pub fn normalize_factor(class: &DiscreteConformalClass, mu: &ConformalFactor) -> Result<ConformalFactor> {
    mu.check_len(class)?;
    let mass = factor_mass(class, mu);
    let c = mass.powf(-1.0 / class.q());
    let out = ConformalFactor::new(mu.values().iter().map(|m| m * c).collect())?;
    // One correction pass absorbs the rounding of the power.
    let residual = factor_mass(class, &out);
    if (residual - 1.0).abs() > 1e-15 {
        let c2 = residual.powf(-1.0 / class.q());
        return ConformalFactor::new(out.values().iter().map(|m| m * c2).collect());
    }
    Ok(out)
}
