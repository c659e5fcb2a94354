use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Mass matrix of a generalized problem `A x = λ M x`.
pub(crate) enum Mass<'a> {
    Diagonal(&'a [f64]),
    Dense(&'a DMatrix<f64>),
}

/// Eigen-decomposition of a symmetric matrix, ascending.
pub(crate) fn symmetric_eigh(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// All eigenpairs of `A x = λ M x` with `M` symmetric positive definite.
/// Columns of the returned matrix are `M`-orthonormal.
pub(crate) fn generalized_eigh(a: &DMatrix<f64>, mass: Mass<'_>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    match mass {
        Mass::Diagonal(m) => {
            let s: Vec<f64> = m.iter().map(|v| 1.0 / v.sqrt()).collect();
            let b = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| s[i] * a[(i, j)] * s[j]);
            let (values, mut y) = symmetric_eigh(b);
            for (mut row, si) in y.row_iter_mut().zip(&s) {
                row *= *si;
            }
            Ok((values, y))
        }
        Mass::Dense(m) => {
            let chol = m
                .clone()
                .cholesky()
                .ok_or_else(|| Error::LinearAlgebra("mass matrix is not positive definite".into()))?;
            let l = chol.l();
            let l_inv = l
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::LinearAlgebra("singular Cholesky factor".into()))?;
            let b = &l_inv * a * l_inv.transpose();
            let (values, y) = symmetric_eigh(b);
            Ok((values, l_inv.transpose() * y))
        }
    }
}
