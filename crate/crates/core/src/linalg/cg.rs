use super::{axpy, dot};

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
///
/// Starts from the contents of `x` and stops when `‖b − Ax‖ ≤ rel_tol·‖b‖`
/// or after `max_iter` steps. Returns `(iterations, relative residual)`, or
/// `None` if the operator shows a direction of non-positive curvature.
pub(crate) fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    inv_diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Option<(usize, f64)> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Some((0, 0.0));
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rel_tol {
            return Some((it, rel));
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return None;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        for ((zi, ri), d) in z.iter_mut().zip(&r).zip(inv_diag) {
            *zi = ri * d;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rel = dot(&r, &r).sqrt() / bnorm;
    }
    Some((max_iter, rel))
}
