mod common;

use std::collections::HashMap;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use snr_core::problems::{glm_system, snm_system, NonlinearSystem};
use snr_core::rng::seeded_rng;
use snr_core::sketches::*;
use snr_core::Error;

fn all_kinds(m: usize, rng: &mut snr_core::rng::SolverRng) -> Vec<SketchDistribution> {
    let mut weights: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 0.01).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let divisor = (1..=m).rev().find(|b| m.is_multiple_of(*b) && *b < m).unwrap_or(1);
    vec![
        SketchDistribution::Identity,
        SketchDistribution::SingleRow { weights: None },
        SketchDistribution::SingleRow { weights: Some(weights) },
        SketchDistribution::UniformSubsample { tau: rng.random_range(1..=m) },
        SketchDistribution::Gaussian { tau: rng.random_range(1..=m + 3) },
        SketchDistribution::Block {
            block_size: divisor,
            tau: rng.random_range(1..=m / divisor),
        },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn structured_actions_match_dense(seed in 0u64..100_000, m in 1usize..40) {
        let mut rng = seeded_rng(seed);
        for dist in all_kinds(m, &mut rng) {
            let s = dist.sample(m, None, &mut rng).unwrap();
            let dense = s.to_dense();
            prop_assert_eq!(dense.nrows(), m);
            prop_assert_eq!(dense.ncols(), s.tau());
            let v = gaussian_vector(&mut rng, m);
            prop_assert!((s.transpose_apply(&v).unwrap() - dense.transpose() * &v).amax() <= 1e-12);
            let u = gaussian_vector(&mut rng, s.tau());
            prop_assert!((s.apply(&u).unwrap() - &dense * &u).amax() <= 1e-12);
        }
    }

    #[test]
    fn coin_and_snm_actions_match_dense(seed in 0u64..100_000) {
        let mut rng = seeded_rng(seed);
        let (n, d) = (rng.random_range(1..10), rng.random_range(1..10));
        let ds = random_glm(&mut rng, n, d, 0.5, 0.2);
        let sys = glm_system(&ds);
        let x = gaussian_vector(&mut rng, n + d);
        let dist = SketchDistribution::TossingCoin { b: 0.5, tau_d: rng.random_range(1..=d), tau_n: rng.random_range(1..=n), d, n };
        let count = rng.random_range(1..5);
        let losses = random_logistics(&mut rng, count, 2, 0.1);
        let split = snm_system(&losses);
        let xs = gaussian_vector(&mut rng, split.input_dim());
        let snm = SketchDistribution::SnmStructured { tau: rng.random_range(1..=losses.len()) };
        let adapted = SketchDistribution::Adapted { base: Box::new(SketchDistribution::Gaussian { tau: 2 }) };
        let cases: Vec<(SketchRealization, &dyn NonlinearSystem, &nalgebra::DVector<f64>)> = vec![
            (dist.sample(n + d, None, &mut rng).unwrap(), &sys, &x),
            (dist.sample(n + d, None, &mut rng).unwrap(), &sys, &x),
            (snm.sample(split.output_dim(), Some(SketchContext { system: &split, x: &xs }), &mut rng).unwrap(), &split, &xs),
            (adapted.sample(n + d, Some(SketchContext { system: &sys, x: &x }), &mut rng).unwrap(), &sys, &x),
        ];
        for (s, system, point) in cases {
            let dense = s.to_dense();
            let m = system.output_dim();
            let v = gaussian_vector(&mut rng, m);
            prop_assert!((s.transpose_apply(&v).unwrap() - dense.transpose() * &v).amax() <= 1e-12 * (1.0 + dense.amax()));
            let js = s.jacobian_product(system, point).unwrap();
            let reference = system.df_times(point, &dense);
            prop_assert!((js - reference).amax() <= 1e-12 * (1.0 + dense.amax()));
        }
    }
}

#[test]
fn snm_sketch_shape_and_example() {
    let s = snm_sketch(1, vec![DMatrix::identity(1, 1)], vec![0]).unwrap();
    assert_eq!(s.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]));
    let h: Vec<DMatrix<f64>> = (0..3).map(|k| DMatrix::identity(2, 2) * (k as f64 + 1.0)).collect();
    let s = snm_sketch(2, h, vec![0, 1, 2]).unwrap();
    assert_eq!(s.tau(), 8);
}

#[test]
fn snm_sketch_second_moment_is_positive_definite() {
    let mut rng = seeded_rng(12);
    let losses = random_logistics(&mut rng, 2, 2, 0.2);
    let sys = snm_system(&losses);
    let x = gaussian_vector(&mut rng, 6);
    let ctx = SketchContext { system: &sys, x: &x };
    let e = estimate_e_sst(&SketchDistribution::SnmStructured { tau: 1 }, 6, Some(ctx), 2000, &mut rng).unwrap();
    let min = e.symmetric_eigen().eigenvalues.min();
    assert!(min > 0.0, "smallest eigenvalue {min}");
}

#[test]
fn uniform_pairs_are_equally_likely() {
    let mut rng = seeded_rng(13);
    let dist = SketchDistribution::UniformSubsample { tau: 2 };
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let draws = 100_000;
    for _ in 0..draws {
        let rows = dist.sample(4, None, &mut rng).unwrap().selected_rows().unwrap();
        *counts.entry(rows).or_default() += 1;
    }
    assert_eq!(counts.len(), 6);
    for (pair, c) in counts {
        let freq = c as f64 / draws as f64;
        assert!((freq - 1.0 / 6.0).abs() <= 0.02, "{pair:?}: {freq}");
    }
}

#[test]
fn second_moment_examples() {
    let mut rng = seeded_rng(14);
    let e = estimate_e_sst(&SketchDistribution::UniformSubsample { tau: 2 }, 4, None, 100_000, &mut rng).unwrap();
    assert!((e - DMatrix::identity(4, 4) * 0.5).amax() <= 0.02);
    let e = estimate_e_sst(&SketchDistribution::Gaussian { tau: 5 }, 3, None, 100_000, &mut rng).unwrap();
    assert!((e - DMatrix::identity(3, 3)).amax() <= 0.05);
    let e = estimate_e_sst(&SketchDistribution::Identity, 5, None, 3, &mut rng).unwrap();
    assert_eq!(e, DMatrix::identity(5, 5));
    // Block sketches pick whole blocks: E[SSᵀ] = (τ / #blocks) I.
    let e = estimate_e_sst(&SketchDistribution::Block { block_size: 2, tau: 1 }, 6, None, 100_000, &mut rng).unwrap();
    assert!((e - DMatrix::identity(6, 6) / 3.0).amax() <= 0.01);
}

#[test]
fn tossing_coin_frequency() {
    let mut rng = seeded_rng(15);
    let b = 0.3;
    let dist = SketchDistribution::TossingCoin { b, tau_d: 2, tau_n: 3, d: 4, n: 7 };
    let draws = 100_000;
    let mut nonlinear = 0;
    for _ in 0..draws {
        if matches!(dist.sample(11, None, &mut rng).unwrap().kind(), SketchKind::CoinNonlinear { .. }) {
            nonlinear += 1;
        }
    }
    let freq = nonlinear as f64 / draws as f64;
    assert!((freq - b).abs() <= 3.0 * (b * (1.0 - b) / draws as f64).sqrt(), "{freq}");
}

#[test]
fn state_dependent_kinds_need_context() {
    let mut rng = seeded_rng(16);
    let snm = SketchDistribution::SnmStructured { tau: 1 };
    assert_eq!(snm.sample(4, None, &mut rng), Err(Error::MissingContext));
    let adapted = SketchDistribution::Adapted { base: Box::new(SketchDistribution::Identity) };
    assert_eq!(adapted.sample(4, None, &mut rng), Err(Error::MissingContext));
    assert!(matches!(
        SketchDistribution::UniformSubsample { tau: 5 }.sample(4, None, &mut rng),
        Err(Error::InvalidTau { tau: 5, m: 4 })
    ));
}
