//! Tossing-coin sketch (TCS) solvers for regularized logistic regression.
//!
//! The primal-dual system on `x = [α; w]` has `d` linear equations
//! `Aα/(λn) − w = 0` and `n` nonlinear ones `α_i + φ′_i(a_iᵀw) = 0`. Each
//! iteration flips a coin and takes an exact sketched Newton step on a block
//! of one of the two groups, maintaining `ᾱ = Aα/(λn)` incrementally.

use std::sync::Arc;

use log::warn;
use nalgebra::Cholesky;

use crate::data_io::dataset_report;
use crate::error::{Error, Result};
use crate::linalg::{solve_spd, DenseMatrix, Vector};
use crate::problems::{glm_grad_p, glm_objective, glm_phi_derivs, glm_system, GlmDataset, NonlinearSystem};
use crate::rng::{seeded_rng, SolverRng};
use crate::sketches::{SketchDistribution, SketchKind, SketchRealization};
use crate::snr::DIVERGENCE_THRESHOLD;
use crate::trace::{RunStatus, SolverTrace, Stopwatch, TraceRecord};

/// Largest feature dimension for which `AAᵀ/(λ²n²)` is cached densely.
pub const COV_MAX_DIM: usize = 4000;

/// Coin probability that samples each equation equally often:
/// `τ_d n / (τ_d n + τ_n d)`.
pub fn p_uniform(tau_d: usize, tau_n: usize, d: usize, n: usize) -> f64 {
    let a = (tau_d * n) as f64;
    a / (a + (tau_n * d) as f64)
}

/// Named choices for the coin probability `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BernoulliPreset {
    /// `p_uniform`
    Uniform,
    /// `p_uniform − δ`
    UniformMinus(f64),
    /// `n / (n + 3τ_n)`
    LargeData,
    Fixed(f64),
}

impl Default for BernoulliPreset {
    fn default() -> Self {
        BernoulliPreset::UniformMinus(0.01)
    }
}

impl BernoulliPreset {
    /// Resolves the preset, clamped into `[0.001, 0.999]`; `Fixed` values are
    /// returned unchanged so that invalid ones are reported by validation.
    pub fn resolve(&self, tau_d: usize, tau_n: usize, d: usize, n: usize) -> f64 {
        let clamp = |b: f64| b.clamp(1e-3, 1.0 - 1e-3);
        match *self {
            BernoulliPreset::Uniform => clamp(p_uniform(tau_d, tau_n, d, n)),
            BernoulliPreset::UniformMinus(delta) => clamp(p_uniform(tau_d, tau_n, d, n) - delta),
            BernoulliPreset::LargeData => clamp(n as f64 / (n as f64 + 3.0 * tau_n as f64)),
            BernoulliPreset::Fixed(b) => b,
        }
    }
}

/// Nonlinear-block stepsize from the dataset's condition number.
pub fn default_gamma(condition_number: f64) -> f64 {
    if condition_number >= 1e6 {
        1.0
    } else {
        1.8
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearch {
    Off,
    /// Backtracking on the sketched objective: accept `γ` once
    /// `f(x + γΔ) ≤ (1 − 2cγ) f(x)`, otherwise `γ ← βγ`.
    Armijo { c: f64, beta: f64, gamma_init: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TcsConfig {
    pub tau_d: usize,
    pub tau_n: usize,
    pub b: f64,
    /// Stepsize of nonlinear-block steps; linear blocks always use 1.
    pub gamma: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub time_budget_s: Option<f64>,
    pub line_search: LineSearch,
}

impl TcsConfig {
    /// Full linear block, `τ_n = min(150, n)`, default coin, and `γ` from the
    /// condition number (1 when it cannot be computed).
    pub fn for_dataset(ds: &GlmDataset) -> Self {
        let (d, n) = (ds.d(), ds.n());
        let tau_n = 150.min(n.max(1));
        let gamma = dataset_report(ds).map_or(1.0, |r| default_gamma(r.condition_number));
        Self {
            tau_d: d.max(1),
            tau_n,
            b: BernoulliPreset::default().resolve(d.max(1), tau_n, d.max(1), n.max(1)),
            gamma,
            tol: 1e-5,
            max_iters: 1_000_000,
            eval_every: 1000,
            seed: 0,
            time_budget_s: None,
            line_search: LineSearch::Off,
        }
    }

    /// Copy with `τ_d ≤ d` and `τ_n ≤ n`, warning when clamping.
    pub fn clamped(&self, d: usize, n: usize) -> Self {
        let mut out = self.clone();
        if out.tau_d > d {
            warn!("tau_d = {} exceeds d = {d}; clamping", out.tau_d);
            out.tau_d = d;
        }
        if out.tau_n > n {
            warn!("tau_n = {} exceeds n = {n}; clamping", out.tau_n);
            out.tau_n = n;
        }
        out
    }

    pub fn validate(&self, d: usize, n: usize) -> Result<()> {
        if self.tau_d == 0 || self.tau_d > d {
            return Err(Error::InvalidTau { tau: self.tau_d, m: d });
        }
        if self.tau_n == 0 || self.tau_n > n {
            return Err(Error::InvalidTau { tau: self.tau_n, m: n });
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(Error::BadParameter(format!("coin probability {} must lie in (0, 1)", self.b)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::BadParameter(format!("stepsize {} must be positive", self.gamma)));
        }
        if self.eval_every == 0 {
            return Err(Error::BadParameter("eval_every must be at least 1".into()));
        }
        if let LineSearch::Armijo { c, beta, gamma_init } = self.line_search {
            if !(c > 0.0 && c <= 0.5) {
                return Err(Error::BadParameter(format!("Armijo constant {c} must lie in (0, 1/2]")));
            }
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::BadParameter(format!("backtracking factor {beta} must lie in (0, 1)")));
            }
            if !(gamma_init > 0.0 && gamma_init.is_finite()) {
                return Err(Error::BadParameter(format!("initial stepsize {gamma_init} must be positive")));
            }
        }
        Ok(())
    }

    pub fn distribution(&self, d: usize, n: usize) -> SketchDistribution {
        SketchDistribution::TossingCoin {
            b: self.b,
            tau_d: self.tau_d,
            tau_n: self.tau_n,
            d,
            n,
        }
    }
}

/// `AAᵀ/(λ²n²)`, or `None` when `d` exceeds [`COV_MAX_DIM`].
pub fn tcs_covariance(ds: &GlmDataset) -> Option<Arc<DenseMatrix>> {
    if ds.d() > COV_MAX_DIM {
        return None;
    }
    let s = ds.lambda() * ds.n() as f64;
    Some(Arc::new(ds.features().gram() / (s * s)))
}

#[derive(Debug, Clone)]
pub struct TcsState {
    pub alpha: Vector,
    pub w: Vector,
    /// Running value of `Aα/(λn)`.
    pub alpha_bar: Vector,
    cov: Option<Arc<DenseMatrix>>,
}

impl TcsState {
    pub fn zeros(ds: &GlmDataset, cov: Option<Arc<DenseMatrix>>) -> Self {
        Self {
            alpha: Vector::zeros(ds.n()),
            w: Vector::zeros(ds.d()),
            alpha_bar: Vector::zeros(ds.d()),
            cov,
        }
    }

    pub fn from_parts(ds: &GlmDataset, alpha: Vector, w: Vector, cov: Option<Arc<DenseMatrix>>) -> Result<Self> {
        if alpha.len() != ds.n() || w.len() != ds.d() {
            return Err(Error::DimensionMismatch {
                expected: ds.n() + ds.d(),
                got: alpha.len() + w.len(),
            });
        }
        let mut st = Self {
            alpha,
            w,
            alpha_bar: Vector::zeros(ds.d()),
            cov,
        };
        st.refresh_alpha_bar(ds);
        Ok(st)
    }

    pub fn covariance(&self) -> Option<&DenseMatrix> {
        self.cov.as_deref()
    }

    fn exact_alpha_bar(&self, ds: &GlmDataset) -> Vector {
        ds.features().mul_vec_by_cols(&self.alpha) / (ds.lambda() * ds.n() as f64)
    }

    /// `‖ᾱ − Aα/(λn)‖`.
    pub fn alpha_bar_drift(&self, ds: &GlmDataset) -> f64 {
        (&self.alpha_bar - self.exact_alpha_bar(ds)).norm()
    }

    pub fn refresh_alpha_bar(&mut self, ds: &GlmDataset) {
        self.alpha_bar = self.exact_alpha_bar(ds);
    }

    /// The point `[α; w]` of the primal-dual system.
    pub fn to_point(&self) -> Vector {
        let (n, d) = (self.alpha.len(), self.w.len());
        let mut x = Vector::zeros(n + d);
        x.rows_mut(0, n).copy_from(&self.alpha);
        x.rows_mut(n, d).copy_from(&self.w);
        x
    }

    /// Adds `γ · delta`.
    pub fn apply(&mut self, delta: &TcsDelta, gamma: f64) {
        match delta {
            TcsDelta::Linear {
                rows,
                y,
                d_alpha,
                d_alpha_bar,
            } => {
                for (k, &j) in rows.iter().enumerate() {
                    self.w[j] += gamma * y[k];
                }
                self.alpha.axpy(gamma, d_alpha, 1.0);
                self.alpha_bar.axpy(gamma, d_alpha_bar, 1.0);
            }
            TcsDelta::Nonlinear {
                samples,
                y,
                d_w,
                d_alpha_bar,
            } => {
                for (k, &i) in samples.iter().enumerate() {
                    self.alpha[i] += gamma * y[k];
                }
                self.w.axpy(gamma, d_w, 1.0);
                self.alpha_bar.axpy(gamma, d_alpha_bar, 1.0);
            }
        }
    }
}

/// Unscaled update direction of one block step.
#[derive(Debug, Clone, PartialEq)]
pub enum TcsDelta {
    /// `Δw_{B_d} = y`, `Δα = −A_{B_d,:}ᵀ y/(λn)`, `Δᾱ = −cov[:, B_d] y`.
    Linear {
        rows: Vec<usize>,
        y: Vector,
        d_alpha: Vector,
        d_alpha_bar: Vector,
    },
    /// `Δα_{B_n} = y`, `Δw = ∇Φ_{B_n} y`, `Δᾱ = A_{:,B_n} y/(λn)`.
    Nonlinear {
        samples: Vec<usize>,
        y: Vector,
        d_w: Vector,
        d_alpha_bar: Vector,
    },
}

impl TcsDelta {
    /// The direction in the `[α; w]` layout.
    pub fn to_point(&self, n: usize, d: usize) -> Vector {
        let mut out = Vector::zeros(n + d);
        match self {
            TcsDelta::Linear { rows, y, d_alpha, .. } => {
                out.rows_mut(0, n).copy_from(d_alpha);
                for (k, &j) in rows.iter().enumerate() {
                    out[n + j] = y[k];
                }
            }
            TcsDelta::Nonlinear { samples, y, d_w, .. } => {
                for (k, &i) in samples.iter().enumerate() {
                    out[i] = y[k];
                }
                out.rows_mut(n, d).copy_from(d_w);
            }
        }
        out
    }
}

fn check_subset(subset: &[usize], bound: usize) -> Result<()> {
    if subset.is_empty() || subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&i| i >= bound) {
        return Err(Error::BadSubset(format!("not a sorted subset of 0..{bound}")));
    }
    Ok(())
}

fn check_state(state: &TcsState, ds: &GlmDataset) -> Result<()> {
    if state.alpha.len() != ds.n() || state.w.len() != ds.d() || state.alpha_bar.len() != ds.d() {
        return Err(Error::DimensionMismatch {
            expected: ds.n() + ds.d(),
            got: state.alpha.len() + state.w.len(),
        });
    }
    Ok(())
}

/// Linear-block direction: solves `(cov[B,B] + I) y = ᾱ_B − w_B`.
pub fn tcs_linear_block_step(state: &TcsState, ds: &GlmDataset, rows: &[usize]) -> Result<TcsDelta> {
    check_state(state, ds)?;
    check_subset(rows, ds.d())?;
    let a = ds.features();
    let scale = ds.lambda() * ds.n() as f64;
    let tau = rows.len();
    let rhs = Vector::from_iterator(tau, rows.iter().map(|&j| state.alpha_bar[j] - state.w[j]));
    let mut m = DenseMatrix::identity(tau, tau);
    match &state.cov {
        Some(cov) => {
            for (k1, &j1) in rows.iter().enumerate() {
                for (k2, &j2) in rows.iter().enumerate() {
                    m[(k1, k2)] += cov[(j1, j2)];
                }
            }
        }
        None => {
            for (k1, &j1) in rows.iter().enumerate() {
                let (c1, v1) = a.row(j1);
                let mut dense = Vector::zeros(ds.n());
                for (&c, &v) in c1.iter().zip(v1) {
                    dense[c] = v;
                }
                for (k2, &j2) in rows.iter().enumerate() {
                    m[(k1, k2)] += a.row_dot(j2, &dense) / (scale * scale);
                }
            }
        }
    }
    let y = solve_spd(&m, &rhs)?;
    let mut d_alpha = Vector::zeros(ds.n());
    for (k, &j) in rows.iter().enumerate() {
        a.row_axpy(j, -y[k] / scale, &mut d_alpha);
    }
    let d_alpha_bar = match &state.cov {
        Some(cov) => {
            let mut out = Vector::zeros(ds.d());
            for (k, &j) in rows.iter().enumerate() {
                out.axpy(-y[k], &cov.column(j), 1.0);
            }
            out
        }
        None => a.mul_vec_by_cols(&d_alpha) / scale,
    };
    Ok(TcsDelta::Linear {
        rows: rows.to_vec(),
        y,
        d_alpha,
        d_alpha_bar,
    })
}

/// Factorization of `I + KᵀK` with `K = ∇Φ_{B_n}` (`d × τ`), through the
/// smaller of the two equivalent systems. Both sides are positive definite.
enum BlockFactor {
    Direct(Cholesky<f64, nalgebra::Dyn>),
    /// `(I + KᵀK)⁻¹ = I − Kᵀ(I + KKᵀ)⁻¹K`.
    Woodbury {
        k: DenseMatrix,
        chol: Cholesky<f64, nalgebra::Dyn>,
    },
}

impl BlockFactor {
    fn new(k: &DenseMatrix) -> Result<Self> {
        let (d, tau) = (k.nrows(), k.ncols());
        if tau <= d {
            let m = DenseMatrix::identity(tau, tau) + k.tr_mul(k);
            Cholesky::new(m).map(BlockFactor::Direct).ok_or(Error::NonFinite("nonlinear block system"))
        } else {
            let m = DenseMatrix::identity(d, d) + k * k.transpose();
            Cholesky::new(m)
                .map(|chol| BlockFactor::Woodbury { k: k.clone(), chol })
                .ok_or(Error::NonFinite("nonlinear block system"))
        }
    }

    fn solve(&self, rhs: &Vector) -> Vector {
        match self {
            BlockFactor::Direct(ch) => ch.solve(rhs),
            BlockFactor::Woodbury { k, chol } => rhs - k.tr_mul(&chol.solve(&(k * rhs))),
        }
    }
}

struct NonlinearBlock {
    delta: TcsDelta,
    factor: BlockFactor,
    /// `α_B + Φ_B(w)` at the current point.
    residual: Vector,
}

fn nonlinear_block(state: &TcsState, ds: &GlmDataset, samples: &[usize]) -> Result<NonlinearBlock> {
    check_state(state, ds)?;
    check_subset(samples, ds.n())?;
    let a = ds.features();
    let (d, tau) = (ds.d(), samples.len());
    let scale = ds.lambda() * ds.n() as f64;
    let mut k = DenseMatrix::zeros(d, tau);
    let mut residual = Vector::zeros(tau);
    for (c, &i) in samples.iter().enumerate() {
        let (_, d1, d2) = ds.sample_derivs(i, &state.w);
        residual[c] = state.alpha[i] + d1;
        let (rows, vals) = a.col(i);
        for (&r, &v) in rows.iter().zip(vals) {
            k[(r, c)] = d2 * v;
        }
    }
    crate::linalg::ensure_finite_vec(&residual, "nonlinear residual")?;
    let factor = BlockFactor::new(&k)?;
    let y = factor.solve(&-&residual);
    let d_w = &k * &y;
    let mut d_alpha_bar = Vector::zeros(d);
    for (c, &i) in samples.iter().enumerate() {
        a.col_axpy(i, y[c] / scale, &mut d_alpha_bar);
    }
    Ok(NonlinearBlock {
        delta: TcsDelta::Nonlinear {
            samples: samples.to_vec(),
            y,
            d_w,
            d_alpha_bar,
        },
        factor,
        residual,
    })
}

/// Nonlinear-block direction: solves `(∇Φ_Bᵀ∇Φ_B + I) y = −(α_B + Φ_B)`.
pub fn tcs_nonlinear_block_step(state: &TcsState, ds: &GlmDataset, samples: &[usize]) -> Result<TcsDelta> {
    Ok(nonlinear_block(state, ds, samples)?.delta)
}

/// Single-equation draw for the Kaczmarz variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoinRow {
    /// Linear equation for feature `j`.
    Linear(usize),
    /// Nonlinear equation for sample `i`.
    Nonlinear(usize),
}

/// Scalar-denominator updates for single-equation sketches.
pub fn kaczmarz_tcs_step(state: &TcsState, ds: &GlmDataset, row: CoinRow) -> Result<TcsDelta> {
    check_state(state, ds)?;
    let a = ds.features();
    let scale = ds.lambda() * ds.n() as f64;
    match row {
        CoinRow::Linear(j) => {
            check_subset(&[j], ds.d())?;
            let cjj = match &state.cov {
                Some(cov) => cov[(j, j)],
                None => a.row(j).1.iter().map(|v| v * v).sum::<f64>() / (scale * scale),
            };
            let y = (state.alpha_bar[j] - state.w[j]) / (cjj + 1.0);
            let mut d_alpha = Vector::zeros(ds.n());
            a.row_axpy(j, -y / scale, &mut d_alpha);
            let d_alpha_bar = match &state.cov {
                Some(cov) => cov.column(j) * -y,
                None => a.mul_vec_by_cols(&d_alpha) / scale,
            };
            Ok(TcsDelta::Linear {
                rows: vec![j],
                y: Vector::from_element(1, y),
                d_alpha,
                d_alpha_bar,
            })
        }
        CoinRow::Nonlinear(i) => {
            check_subset(&[i], ds.n())?;
            let (_, d1, d2) = ds.sample_derivs(i, &state.w);
            let y = -(state.alpha[i] + d1) / (a.col_norm_sq(i) * d2 * d2 + 1.0);
            let mut d_w = Vector::zeros(ds.d());
            a.col_axpy(i, y * d2, &mut d_w);
            let mut d_alpha_bar = Vector::zeros(ds.d());
            a.col_axpy(i, y / scale, &mut d_alpha_bar);
            Ok(TcsDelta::Nonlinear {
                samples: vec![i],
                y: Vector::from_element(1, y),
                d_w,
                d_alpha_bar,
            })
        }
    }
}

/// Which block a step updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Linear,
    Nonlinear,
}

/// Outcome of one solver iteration.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub kind: BlockKind,
    pub realization: SketchRealization,
    /// Stepsize actually applied.
    pub gamma: f64,
    pub delta: TcsDelta,
    /// Sketched objective at the start of the step (line search only).
    pub f_before: Option<f64>,
    /// Sketched objective at the accepted point (line search only).
    pub f_after: Option<f64>,
    /// Objective evaluations spent by the line search.
    pub evaluations: usize,
}

/// Step-by-step TCS driver.
pub struct TcsSolver<'a> {
    ds: &'a GlmDataset,
    config: TcsConfig,
    dist: SketchDistribution,
    state: TcsState,
    rng: SolverRng,
    nnz: f64,
    passes: f64,
    iterations: usize,
}

impl<'a> TcsSolver<'a> {
    /// Starts from `α = 0, w = 0`. Pass a shared covariance to avoid
    /// recomputing it per run; `None` computes it here.
    pub fn new(ds: &'a GlmDataset, config: &TcsConfig, cov: Option<Arc<DenseMatrix>>) -> Result<Self> {
        ds.ensure_nonempty()?;
        let (d, n) = (ds.d(), ds.n());
        let config = config.clamped(d, n);
        config.validate(d, n)?;
        let cov = cov.or_else(|| tcs_covariance(ds));
        if let Some(c) = &cov {
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.nrows() });
            }
        }
        Ok(Self {
            ds,
            dist: config.distribution(d, n),
            rng: seeded_rng(config.seed),
            config,
            state: TcsState::zeros(ds, cov),
            nnz: ds.features().nnz().max(1) as f64,
            passes: 0.0,
            iterations: 0,
        })
    }

    pub fn state(&self) -> &TcsState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut TcsState {
        &mut self.state
    }

    pub fn config(&self) -> &TcsConfig {
        &self.config
    }

    pub fn passes(&self) -> f64 {
        self.passes
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    fn block_nnz_rows(&self, rows: &[usize]) -> f64 {
        rows.iter().map(|&j| self.ds.features().row(j).0.len()).sum::<usize>() as f64
    }

    fn block_nnz_cols(&self, cols: &[usize]) -> f64 {
        cols.iter().map(|&i| self.ds.features().col(i).0.len()).sum::<usize>() as f64
    }

    /// Sketched objective of the nonlinear block at `state + γΔ`, reusing the
    /// factorization taken at the current point.
    fn block_objective(&self, block: &NonlinearBlock, gamma: f64) -> f64 {
        let TcsDelta::Nonlinear { samples, y, d_w, .. } = &block.delta else {
            unreachable!("nonlinear block carries a nonlinear delta")
        };
        let w_trial = &self.state.w + d_w * gamma;
        let r = Vector::from_iterator(
            samples.len(),
            samples.iter().enumerate().map(|(c, &i)| {
                let t = self.ds.features().col_dot(i, &w_trial);
                self.state.alpha[i] + gamma * y[c] + glm_phi_derivs(t, self.ds.labels()[i]).1
            }),
        );
        0.5 * r.dot(&block.factor.solve(&r))
    }

    pub fn step(&mut self) -> Result<StepInfo> {
        let k = self.iterations;
        let m = self.ds.d() + self.ds.n();
        let realization = self.dist.sample(m, None, &mut self.rng).map_err(|e| e.at_iteration(k))?;
        let info = match realization.kind() {
            SketchKind::CoinLinear(rows) => {
                let delta = tcs_linear_block_step(&self.state, self.ds, rows).map_err(|e| e.at_iteration(k))?;
                self.passes += self.block_nnz_rows(rows) / self.nnz;
                self.state.apply(&delta, 1.0);
                StepInfo {
                    kind: BlockKind::Linear,
                    realization: realization.clone(),
                    gamma: 1.0,
                    delta,
                    f_before: None,
                    f_after: None,
                    evaluations: 0,
                }
            }
            SketchKind::CoinNonlinear { samples, .. } => {
                let block = nonlinear_block(&self.state, self.ds, samples).map_err(|e| e.at_iteration(k))?;
                let block_pass = self.block_nnz_cols(samples) / self.nnz;
                self.passes += block_pass;
                let (gamma, f_before, f_after, evaluations) = match self.config.line_search {
                    LineSearch::Off => (self.config.gamma, None, None, 0),
                    LineSearch::Armijo { c, beta, gamma_init } => {
                        let f0 = 0.5 * block.residual.dot(&block.factor.solve(&block.residual));
                        let mut gamma = gamma_init;
                        let mut evals = 0;
                        loop {
                            let f = self.block_objective(&block, gamma);
                            evals += 1;
                            self.passes += block_pass;
                            if f <= (1.0 - 2.0 * c * gamma) * f0 {
                                break (gamma, Some(f0), Some(f), evals);
                            }
                            gamma *= beta;
                            if gamma < 1e-12 {
                                return Err(Error::LineSearchStalled { min_step: 1e-12 }.at_iteration(k));
                            }
                        }
                    }
                };
                self.state.apply(&block.delta, gamma);
                StepInfo {
                    kind: BlockKind::Nonlinear,
                    realization: realization.clone(),
                    gamma,
                    delta: block.delta,
                    f_before,
                    f_after,
                    evaluations,
                }
            }
            other => unreachable!("tossing-coin sampler returned {other:?}"),
        };
        self.iterations += 1;
        Ok(info)
    }
}

/// Runs τ-block TCS from `α = 0, w = 0` until `‖∇P(w)‖ ≤ tol`.
pub fn tcs_run(ds: &GlmDataset, config: &TcsConfig) -> Result<SolverTrace> {
    tcs_run_with_cov(ds, config, None)
}

/// TCS with the stochastic Armijo line search on nonlinear blocks.
pub fn tcs_armijo_run(ds: &GlmDataset, config: &TcsConfig) -> Result<SolverTrace> {
    if config.line_search == LineSearch::Off {
        return Err(Error::BadParameter("line search must be enabled".into()));
    }
    tcs_run_with_cov(ds, config, None)
}

/// [`tcs_run`] with a covariance shared across runs.
pub fn tcs_run_with_cov(ds: &GlmDataset, config: &TcsConfig, cov: Option<Arc<DenseMatrix>>) -> Result<SolverTrace> {
    let mut solver = TcsSolver::new(ds, config, cov)?;
    let cfg = solver.config().clone();
    let sys = glm_system(ds);
    let mut watch = Stopwatch::new();
    let mut records = Vec::new();

    let evaluate = |solver: &mut TcsSolver, watch: &Stopwatch| -> Result<(TraceRecord, bool)> {
        let st = solver.state();
        let drift_ok = st.alpha_bar_drift(ds) <= 1e-8 * (1.0 + st.alpha.norm());
        if !drift_ok {
            solver.state_mut().refresh_alpha_bar(ds);
        }
        let st = solver.state();
        let grad = glm_grad_p(&st.w, ds)?.norm();
        let fnorm = sys.eval(&st.to_point()).norm();
        let mut rec = TraceRecord::new(solver.iterations(), solver.passes(), watch.elapsed_s(), grad);
        rec.objective = Some(glm_objective(&st.w, ds)?);
        rec.residual_norm = Some(fnorm);
        let diverged = !(fnorm <= DIVERGENCE_THRESHOLD) || !grad.is_finite();
        Ok((rec, diverged))
    };

    let (rec, diverged) = evaluate(&mut solver, &watch)?;
    let mut status = if diverged {
        RunStatus::Diverged
    } else if rec.metric <= cfg.tol {
        RunStatus::Converged
    } else {
        RunStatus::MaxIterations
    };
    records.push(rec);

    if status == RunStatus::MaxIterations {
        for k in 0..cfg.max_iters {
            watch.resume();
            solver.step()?;
            watch.pause();
            let last = k + 1 == cfg.max_iters;
            if (k + 1) % cfg.eval_every == 0 || last {
                let (rec, diverged) = evaluate(&mut solver, &watch)?;
                let metric = rec.metric;
                records.push(rec);
                if diverged {
                    status = RunStatus::Diverged;
                    break;
                }
                if metric <= cfg.tol {
                    status = RunStatus::Converged;
                    break;
                }
                if let Some(budget) = cfg.time_budget_s {
                    if watch.elapsed_s() > budget {
                        status = RunStatus::TimeBudget;
                        break;
                    }
                }
            }
        }
    }
    let st = solver.state();
    Ok(SolverTrace {
        records,
        final_x: st.to_point(),
        status,
        iterations: solver.iterations(),
        passes: solver.passes(),
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseMatrix;

    fn identity_dataset() -> GlmDataset {
        // A = I₂ with λn = 1.
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        GlmDataset::new(a, vec![1.0, -1.0], 0.5).unwrap()
    }

    #[test]
    fn p_uniform_examples() {
        assert!((p_uniform(123, 150, 123, 32561) - 32561.0 / 32711.0).abs() < 1e-15);
        assert_eq!(p_uniform(5, 7, 5, 7), 0.5);
    }

    #[test]
    fn linear_block_hand_evaluation() {
        let ds = identity_dataset();
        let alpha = Vector::from_column_slice(&[1.0, -2.0]);
        let w = Vector::from_column_slice(&[0.5, 0.5]);
        let r = &alpha - &w;
        let mut st = TcsState::from_parts(&ds, alpha, w, tcs_covariance(&ds)).unwrap();
        let delta = tcs_linear_block_step(&st, &ds, &[0, 1]).unwrap();
        let TcsDelta::Linear { y, d_alpha, .. } = &delta else { panic!() };
        assert!((y - &r / 2.0).norm() < 1e-15);
        assert!((d_alpha + &r / 2.0).norm() < 1e-15);
        st.apply(&delta, 1.0);
        assert!((&st.alpha_bar - &st.w).norm() < 1e-15);
    }

    #[test]
    fn scalar_nonlinear_hand_evaluation() {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
        let ds = GlmDataset::new(a, vec![1.0], 1.0).unwrap();
        let st = TcsState::zeros(&ds, tcs_covariance(&ds));
        let TcsDelta::Nonlinear { y, d_w, .. } = kaczmarz_tcs_step(&st, &ds, CoinRow::Nonlinear(0)).unwrap() else {
            panic!()
        };
        assert!((y[0] - 0.5 / 1.0625).abs() < 1e-15);
        assert!((d_w[0] - 0.5 / 1.0625 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn coin_must_be_random() {
        let ds = identity_dataset();
        let mut cfg = TcsConfig::for_dataset(&ds);
        cfg.b = 1.0;
        assert!(tcs_run(&ds, &cfg).is_err());
        cfg.b = 0.0;
        assert!(tcs_run(&ds, &cfg).is_err());
    }
}
