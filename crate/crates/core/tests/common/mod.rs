//! Random instances and dense reference computations shared by the
//! integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use snr_core::problems::{LogisticLoss, NonlinearSystem, QuadraticLoss};
use snr_core::rng::SolverRng;
use snr_core::{GlmDataset, SparseMatrix};

pub fn gaussian_matrix(rng: &mut SolverRng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector(rng: &mut SolverRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `d × n` GLM with roughly `density` nonzeros per column (at least one).
pub fn random_glm(rng: &mut SolverRng, n: usize, d: usize, density: f64, lambda: f64) -> GlmDataset {
    let mut trip = Vec::new();
    for i in 0..n {
        let forced = rng.random_range(0..d);
        for j in 0..d {
            if j == forced || rng.random::<f64>() < density {
                trip.push((j, i, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    let y = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
    GlmDataset::new(SparseMatrix::from_triplets(d, n, &trip).unwrap(), y, lambda).unwrap()
}

pub fn random_spd(rng: &mut SolverRng, d: usize, shift: f64) -> DMatrix<f64> {
    let g = gaussian_matrix(rng, d, d);
    &g * g.transpose() / d as f64 + DMatrix::identity(d, d) * shift
}

pub fn random_quadratics(rng: &mut SolverRng, n: usize, d: usize) -> Vec<QuadraticLoss> {
    (0..n)
        .map(|_| QuadraticLoss::new(random_spd(rng, d, 0.5), gaussian_vector(rng, d)))
        .collect()
}

pub fn random_logistics(rng: &mut SolverRng, n: usize, d: usize, lambda: f64) -> Vec<LogisticLoss> {
    (0..n)
        .map(|_| LogisticLoss {
            a: gaussian_vector(rng, d),
            y: if rng.random::<bool>() { 1.0 } else { -1.0 },
            lambda,
        })
        .collect()
}

/// Square system `F(x) = Ax + κ sin(x) − b` (componentwise sine).
pub struct SineSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub kappa: f64,
}

impl SineSystem {
    /// Diagonally dominant instance, so `DF` is invertible everywhere.
    pub fn random(rng: &mut SolverRng, p: usize) -> Self {
        let a = gaussian_matrix(rng, p, p) / (p as f64).sqrt() + DMatrix::identity(p, p) * 3.0;
        Self {
            a,
            b: gaussian_vector(rng, p),
            kappa: 0.3,
        }
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut j = self.a.clone();
        for i in 0..x.len() {
            j[(i, i)] += self.kappa * x[i].cos();
        }
        j
    }
}

impl NonlinearSystem for SineSystem {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }
    fn output_dim(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + x.map(|v| self.kappa * v.sin()) - &self.b
    }
    fn df_times(&self, x: &DVector<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        self.jacobian(x).transpose() * v
    }
    fn df_t_times(&self, x: &DVector<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
        self.jacobian(x) * u
    }
}

/// Dense Moore-Penrose route: `DF S (Sᵀ DFᵀ DF S)† SᵀF`, computed with
/// the SVD pseudo-inverse.
pub fn dense_sketched_direction(df: &DMatrix<f64>, s: &DMatrix<f64>, f: &DVector<f64>) -> (DVector<f64>, f64) {
    let js = df * s;
    let gram = js.transpose() * &js;
    let pinv = snr_core::linalg::pseudo_inverse(&gram, 1e-12).unwrap();
    let sf = s.transpose() * f;
    let coef = &pinv * &sf;
    (js * &coef, 0.5 * sf.dot(&coef))
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}
