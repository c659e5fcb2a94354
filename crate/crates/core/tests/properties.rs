//! Randomized structural properties on small synthetic classes.

use conflap::functional::{eval_f, lambda1_sign, DEFAULT_SIGN_TOL};
use conflap::geometry::{build_synthetic_class, cycle_stiffness, normalize_factor, ConformalFactor, DiscreteConformalClass};
use conflap::perturbation::{one_sided_f_derivatives, perturbation_form, zero_mean_generator, DeformationDirection};
use conflap::spectral::{solve_pencil, SolverOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

const N: usize = 12;

fn cycle(r: f64) -> DiscreteConformalClass {
    build_synthetic_class(3, vec![0.5; N], &cycle_stiffness(N, 1.0), vec![r; N]).unwrap()
}

fn positive_field() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.3f64..3.0, N)
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// Orthogonal matrix from the QR factorization of a Gaussian-ish matrix.
fn rotation(entries: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(m, m, &entries[..m * m]).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn functional_is_scale_invariant(mu in positive_field(), c in 0.1f64..10.0) {
        let class = cycle(2.0);
        let opts = SolverOptions::default();
        let mu = ConformalFactor::new(mu).unwrap();
        let f = eval_f(&class, &mu, 2, &opts).unwrap().value;
        let g = eval_f(&class, &mu.scaled(c).unwrap(), 2, &opts).unwrap().value;
        prop_assert!((f - g).abs() <= 1e-10 * f.abs().max(1.0));
    }

    #[test]
    fn first_eigenvalue_sign_is_conformally_invariant(mu in positive_field(), r in prop::sample::select(vec![-1.5, 0.0, 2.0])) {
        let class = cycle(r);
        let opts = SolverOptions::default();
        let base = lambda1_sign(&class, &ConformalFactor::constant(&class, 1.0).unwrap(), &opts, DEFAULT_SIGN_TOL).unwrap();
        let mu = ConformalFactor::new(mu).unwrap();
        prop_assert_eq!(lambda1_sign(&class, &mu, &opts, DEFAULT_SIGN_TOL).unwrap(), base);
    }

    #[test]
    fn eigenvectors_are_weighted_orthonormal(mu in positive_field()) {
        let class = cycle(1.0);
        let mu = ConformalFactor::new(mu).unwrap();
        let spectrum = solve_pencil(&class, &mu, 5, &SolverOptions::default()).unwrap();
        let w: Vec<f64> = mu.values().iter().map(|m| m.powf(class.q()) * 0.5).collect();
        for (i, a) in spectrum.eigenvectors.iter().enumerate() {
            for (j, b) in spectrum.eigenvectors.iter().enumerate() {
                let ip: f64 = a.iter().zip(b).zip(&w).map(|((x, y), w)| x * y * w).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((ip - expected).abs() <= 1e-10);
            }
        }
        prop_assert!(spectrum.residuals.iter().all(|&r| r <= 1e-9));
    }

    /// On the uniform cycle λ₂ = λ₃; the splitting rates must not depend on
    /// which orthonormal basis of that pair is used.
    #[test]
    fn derivative_set_is_basis_invariant(h in prop::collection::vec(-1.0f64..1.0, N), rot in prop::collection::vec(-1.0f64..1.0, 4)) {
        let class = cycle(2.0);
        let mu = normalize_factor(&class, &ConformalFactor::constant(&class, 1.0).unwrap()).unwrap();
        let spectrum = solve_pencil(&class, &mu, 3, &SolverOptions::default()).unwrap();
        prop_assert_eq!(spectrum.cluster_of(2).size, 2);
        let h = DeformationDirection::new(h).unwrap();
        let basis = &spectrum.eigenvectors[1..3];
        let lambda = spectrum.lambda(2);
        let reference = sorted_eigenvalues(perturbation_form(&class, &mu, lambda, basis, &h).unwrap());
        let q = rotation(&rot, 2);
        let rotated: Vec<Vec<f64>> = (0..2)
            .map(|j| (0..N).map(|x| q[(0, j)] * basis[0][x] + q[(1, j)] * basis[1][x]).collect())
            .collect();
        let got = sorted_eigenvalues(perturbation_form(&class, &mu, lambda, &rotated, &h).unwrap());
        for (a, b) in reference.iter().zip(&got) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn zero_mean_generators_have_no_volume_term(mu in positive_field(), w in prop::collection::vec(-1.0f64..1.0, N)) {
        let class = cycle(2.0);
        let mu = normalize_factor(&class, &ConformalFactor::new(mu).unwrap()).unwrap();
        let h = zero_mean_generator(&class, &mu, &w).unwrap();
        let rep = one_sided_f_derivatives(&class, &mu, &h, 1, &SolverOptions::default()).unwrap();
        prop_assert!(rep.volume_term.abs() <= 1e-12 * rep.lambda_k.abs().max(1.0));
    }
}
