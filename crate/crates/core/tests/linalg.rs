mod common;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng;
use snr_core::linalg::{lambda_max, lambda_min_nonzero, lstsq_min_norm, pseudo_inverse, solve_least_norm_psd};
use snr_core::rng::seeded_rng;
use snr_core::SparseMatrix;

/// `M†b` from the eigendecomposition, with the same truncation rule.
fn eig_pinv_solve(m: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.amax();
    let mut out = DVector::zeros(b.len());
    let mut kernel = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if lam > rel_tol * lmax {
            out += v * (v.dot(b) / lam);
        } else {
            kernel.push(v.into_owned());
        }
    }
    let kernel = if kernel.is_empty() {
        DMatrix::zeros(b.len(), 0)
    } else {
        DMatrix::from_columns(&kernel)
    };
    (out, kernel)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn least_norm_matches_eigen_oracle(seed in 0u64..100_000, tau in 1usize..12, rank_frac in 0.0f64..1.0) {
        let mut rng = seeded_rng(seed);
        let r = ((tau as f64 * rank_frac).ceil() as usize).clamp(1, tau);
        let g = gaussian_matrix(&mut rng, tau, r);
        let m = &g * g.transpose();
        let b = gaussian_vector(&mut rng, tau);
        let v = solve_least_norm_psd(&m, &b, 1e-12).unwrap();
        let (oracle, kernel) = eig_pinv_solve(&m, &b, 1e-12);
        prop_assert!((&m * &v - &m * &oracle).norm() <= 1e-8 * b.norm());
        prop_assert!((kernel.transpose() * &v).amax() <= 1e-8 * (1.0 + v.norm()));
    }

    #[test]
    fn lambda_max_matches_eigenvalues(seed in 0u64..100_000, dim in 1usize..=50) {
        let mut rng = seeded_rng(seed);
        let g = gaussian_matrix(&mut rng, dim, dim);
        let m = &g * g.transpose();
        let tol = 1e-9;
        let est = lambda_max(|v| &m * v, dim, tol, 1_000_000, seed).unwrap();
        let exact = SymmetricEigen::new(m.clone()).eigenvalues.max();
        prop_assert!((est.value - exact).abs() <= tol * exact);
        prop_assert!(est.residual <= tol);
    }

    #[test]
    fn sparse_access_paths_agree(seed in 0u64..100_000, r in 1usize..15, c in 1usize..15, density in 0.0f64..1.0) {
        let mut rng = seeded_rng(seed);
        let mut trip = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if rng.random::<f64>() < density {
                    trip.push((i, j, rng.random_range(-3.0..3.0)));
                }
            }
        }
        let a = SparseMatrix::from_triplets(r, c, &trip).unwrap();
        let x = gaussian_vector(&mut rng, c);
        // Both paths accumulate each row in increasing column order.
        prop_assert_eq!(a.mul_vec(&x), a.mul_vec_by_cols(&x));
        let dense = a.to_dense();
        prop_assert!((a.mul_vec(&x) - &dense * &x).amax() <= 1e-12 * (1.0 + x.amax()));
        let v = gaussian_vector(&mut rng, r);
        prop_assert!((a.tr_mul_vec(&v) - dense.transpose() * &v).amax() <= 1e-12 * (1.0 + v.amax()));
        for i in 0..r {
            let (cols, vals) = a.row(i);
            for (&j, &val) in cols.iter().zip(vals) {
                prop_assert_eq!(dense[(i, j)], val);
            }
        }
        prop_assert!((a.gram() - &dense * dense.transpose()).amax() <= 1e-12 * (1.0 + dense.amax().powi(2)));
    }

    #[test]
    fn lstsq_gives_least_norm_solution(seed in 0u64..100_000, m in 1usize..8, p in 1usize..8) {
        let mut rng = seeded_rng(seed);
        let a = gaussian_matrix(&mut rng, m, p);
        let b = gaussian_vector(&mut rng, m);
        let x = lstsq_min_norm(&a, &b, 1e-12).unwrap();
        let oracle = a.clone().pseudo_inverse(1e-12).unwrap() * &b;
        // Forward error of a least-squares solve grows with κ(A).
        let gram = if m >= p { a.transpose() * &a } else { &a * a.transpose() };
        let eig = gram.symmetric_eigen().eigenvalues;
        let kappa = (eig.max() / eig.min().max(f64::MIN_POSITIVE)).sqrt();
        let tol = 1e-9_f64.max(64.0 * f64::EPSILON * kappa * kappa * (1.0 + oracle.amax()));
        prop_assert!((x - &oracle).amax() <= tol, "kappa {kappa:e}");
    }
}

#[test]
fn smallest_nonzero_eigenvalue_examples() {
    let diag = DMatrix::from_diagonal(&DVector::from_column_slice(&[0.0, 3.0, 5.0]));
    assert!((lambda_min_nonzero(&diag, 1e-12).unwrap() - 3.0).abs() < 1e-14);
    assert!((lambda_min_nonzero(&DMatrix::identity(3, 3), 1e-12).unwrap() - 1.0).abs() < 1e-14);
    let proj = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
    assert!((lambda_min_nonzero(&proj, 1e-12).unwrap() - 1.0).abs() < 1e-14);
    assert_eq!(lambda_min_nonzero(&DMatrix::zeros(2, 2), 1e-12).unwrap(), 0.0);
}

/// Rank-one projection on which an SVD at the default convergence threshold
/// returns σ₁ ≈ 1.012 and a visibly wrong reconstruction.
#[test]
fn pseudo_inverse_of_rank_one_projection() {
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.3831115424223976, 0.43618373834419244, -0.21466447048641807,
            0.43618373834419233, 0.4966079914818876, -0.24440180171655487,
            -0.21466447048641812, -0.2444018017165549, 0.12028046609571487,
        ],
    );
    let p = pseudo_inverse(&m, 1e-12).unwrap();
    // A projection is its own pseudo-inverse.
    assert!((&p - &m).amax() <= 1e-12, "{p}");
    assert!((&m * &p * &m - &m).amax() <= 1e-12);
    assert!((&p * &m * &p - &p).amax() <= 1e-12);
    let b = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
    assert!((lstsq_min_norm(&m, &b, 1e-12).unwrap() - &m * &b).amax() <= 1e-12);
}

proptest! {
    #[test]
    fn pseudo_inverse_satisfies_penrose_conditions(seed in 0u64..100_000, m in 1usize..7, p in 1usize..7, r in 0usize..7) {
        let mut rng = seeded_rng(seed);
        let r = r.min(m).min(p);
        let a = gaussian_matrix(&mut rng, m, r) * gaussian_matrix(&mut rng, r, p);
        let pinv = pseudo_inverse(&a, 1e-10).unwrap();
        let s = 1.0 + a.amax();
        let t = 1e-9 * s * (1.0 + pinv.amax()).powi(2);
        prop_assert!((&a * &pinv * &a - &a).amax() <= t);
        prop_assert!((&pinv * &a * &pinv - &pinv).amax() <= t);
        prop_assert!((&a * &pinv - (&a * &pinv).transpose()).amax() <= t);
        prop_assert!((&pinv * &a - (&pinv * &a).transpose()).amax() <= t);
    }
}
