//! Linear-algebra kernels used by the eigensolvers.

mod cg;
mod dense;
mod eigs;

pub(crate) use cg::pcg;
pub(crate) use dense::{generalized_eigh, symmetric_eigh, Mass};
pub(crate) use eigs::{davidson, DavidsonOptions, LinearOperator};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha·x`.
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Neumaier-compensated sum.
pub(crate) fn ksum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for x in terms {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}
