//! User-supplied classes given directly as `(S, dv, R, n)`.

use super::{Backend, DiscreteConformalClass, Discretization, GraphLaplacian, Stiffness};
use crate::error::{Error, Result};

/// Builds a class from explicit data.
///
/// `stiffness` lists `(row, column, value)` entries of a symmetric matrix
/// with zero row sums and non-positive off-diagonal entries (a weighted
/// graph Laplacian); duplicate entries are summed. Synthetic nodes carry no
/// coordinates, so curvature and factors must be given as node values.
pub fn build_synthetic_class(
    dim: usize,
    dv: Vec<f64>,
    stiffness: &[(usize, usize, f64)],
    curvature: Vec<f64>,
) -> Result<DiscreteConformalClass> {
    if dv.is_empty() {
        return Err(Error::Construction("synthetic class needs at least one node".into()));
    }
    let graph = GraphLaplacian::from_triplets(dv.len(), stiffness)?;
    DiscreteConformalClass::new(
        dim,
        dv,
        Stiffness::Graph(graph),
        curvature,
        Backend::Synthetic,
        Vec::new(),
        0,
        Discretization::Nodal,
        None,
    )
}

/// Stiffness triplets of a weighted cycle graph, handy for small examples.
pub fn cycle_stiffness(n: usize, weight: f64) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(3 * n);
    for i in 0..n {
        let j = (i + 1) % n;
        out.push((i, j, -weight));
        out.push((j, i, -weight));
        out.push((i, i, weight));
        out.push((j, j, weight));
    }
    out
}
