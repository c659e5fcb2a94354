//! Flat 3-torus with a periodic finite-difference stiffness.

use super::{Backend, DiscreteConformalClass, Discretization, FieldSpec, PeriodicStencil, Stiffness};
use crate::error::{Error, Result};

/// Builds the flat torus `Π [0, L_a)` on a uniform grid.
///
/// Node `(i, j, k)` has index `(i·n₁ + j)·n₂ + k` and coordinates
/// `(i·h₀, j·h₁, k·h₂)`. The curvature field is sampled at the nodes and
/// need not be the (zero) curvature of the flat metric.
pub fn build_torus_class(grid: [usize; 3], edges: [f64; 3], curvature: &FieldSpec) -> Result<DiscreteConformalClass> {
    for (a, &g) in grid.iter().enumerate() {
        if g < 4 {
            return Err(Error::Construction(format!("torus grid axis {a} has {g} points; at least 4 required")));
        }
    }
    for (a, &l) in edges.iter().enumerate() {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Construction(format!("torus edge length on axis {a} is {l}")));
        }
    }
    let h = [edges[0] / grid[0] as f64, edges[1] / grid[1] as f64, edges[2] / grid[2] as f64];
    let cell = h[0] * h[1] * h[2];
    let n = grid.iter().product::<usize>();

    let mut coords = Vec::with_capacity(3 * n);
    for i in 0..grid[0] {
        for j in 0..grid[1] {
            for k in 0..grid[2] {
                coords.extend_from_slice(&[i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]]);
            }
        }
    }
    let stencil = PeriodicStencil::new(grid, [cell / (h[0] * h[0]), cell / (h[1] * h[1]), cell / (h[2] * h[2])]);
    let placeholder = DiscreteConformalClass::new(
        3,
        vec![cell; n],
        Stiffness::Periodic(stencil),
        vec![0.0; n],
        Backend::TorusFd,
        coords,
        3,
        Discretization::Nodal,
        Some(edges.iter().product()),
    )?;
    let r = placeholder.sample_field(curvature)?;
    placeholder.with_curvature(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn volume_and_curvature_integrals() {
        let class = build_torus_class([16, 16, 16], [TAU; 3], &FieldSpec::Constant(6.0)).unwrap();
        assert!((class.total_volume() - 8.0 * PI.powi(3)).abs() < 1e-10);
        assert!((class.total_volume() - 248.0502134423986).abs() < 1e-10);

        let r = FieldSpec::parse("6 + 2*sin(x1)").unwrap();
        let class = build_torus_class([16, 16, 16], [TAU; 3], &r).unwrap();
        assert!((class.integrate(class.curvature()) - 6.0 * TAU.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn rejects_small_grids_and_bad_edges() {
        let r = FieldSpec::Constant(1.0);
        assert!(build_torus_class([3, 8, 8], [1.0; 3], &r).is_err());
        assert!(build_torus_class([8, 8, 8], [1.0, 0.0, 1.0], &r).is_err());
        assert!(build_torus_class([8, 8, 8], [1.0, -2.0, 1.0], &r).is_err());
    }

    #[test]
    fn anisotropic_coefficients() {
        let class = build_torus_class([4, 5, 6], [1.0, 2.0, 3.0], &FieldSpec::Constant(0.0)).unwrap();
        let Stiffness::Periodic(s) = class.stiffness() else { panic!() };
        let h = [0.25, 0.4, 0.5];
        let cell = h[0] * h[1] * h[2];
        for a in 0..3 {
            assert!((s.coefficients()[a] - cell / (h[a] * h[a])).abs() < 1e-15);
        }
        assert_eq!(class.coordinates(1), &[0.0, 0.0, 0.5]);
        assert_eq!(class.coordinates(6), &[0.0, 0.4, 0.0]);
    }
}
