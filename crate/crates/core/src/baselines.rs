//! First-order comparison methods on `P(w)`: SGD, SAG and SVRG.
//!
//! All three sample one data point uniformly per inner step. Cost is
//! counted in effective passes, the stored entries of `A` touched divided
//! by `nnz(A)`, so a full gradient costs one pass.

use rand::Rng;

use crate::data_io::dataset_report;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::problems::{glm_grad_p, glm_objective, glm_phi_derivs, GlmDataset};
use crate::rng::{seeded_rng, SolverRng};
use crate::snr::DIVERGENCE_THRESHOLD;
use crate::trace::{RunStatus, SolverTrace, Stopwatch, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMethod {
    Sgd,
    Sag,
    Svrg,
}

impl BaselineMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMethod::Sgd => "sgd",
            BaselineMethod::Sag => "sag",
            BaselineMethod::Svrg => "svrg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    /// `None` uses `1/L` from the dataset report.
    pub stepsize: Option<f64>,
    /// SVRG inner-loop length; `None` uses `n`.
    pub inner_loop: Option<usize>,
    pub max_passes: f64,
    pub tol: f64,
    /// Inner steps between metric evaluations; `None` uses `n`.
    pub eval_every: Option<usize>,
    pub seed: u64,
    pub time_budget_s: Option<f64>,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        Self {
            method,
            stepsize: None,
            inner_loop: None,
            max_passes: 100.0,
            tol: 1e-5,
            eval_every: None,
            seed: 0,
            time_budget_s: None,
        }
    }

    /// Stepsize actually used on `ds`.
    pub fn resolve_stepsize(&self, ds: &GlmDataset) -> Result<f64> {
        let eta = match self.stepsize {
            Some(eta) => eta,
            None => 1.0 / dataset_report(ds)?.smoothness_l,
        };
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::BadParameter(format!("stepsize {eta} must be positive")));
        }
        Ok(eta)
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_passes > 0.0) {
            return Err(Error::BadParameter("max_passes must be positive".into()));
        }
        if self.eval_every == Some(0) || self.inner_loop == Some(0) {
            return Err(Error::BadParameter("eval_every and inner_loop must be at least 1".into()));
        }
        Ok(())
    }
}

/// Derivative `φ′_i(a_iᵀw)` of sample `i`'s loss.
fn sample_slope(ds: &GlmDataset, i: usize, w: &Vector) -> f64 {
    glm_phi_derivs(ds.features().col_dot(i, w), ds.labels()[i]).1
}

/// One SGD step `w ← w − η(φ′_i(a_iᵀw) a_i + λw)`.
pub fn sgd_step(ds: &GlmDataset, w: &mut Vector, i: usize, eta: f64) {
    let g = sample_slope(ds, i, w);
    *w *= 1.0 - eta * ds.lambda();
    ds.features().col_axpy(i, -eta * g, w);
}

/// SAG gradient table. Since every sample gradient is `φ′ a_i` plus the
/// regularizer, only the scalar slopes are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SagState {
    pub table: Vec<f64>,
    /// `∑_i table_i a_i`
    pub sum: Vector,
}

impl SagState {
    pub fn new(ds: &GlmDataset) -> Self {
        Self {
            table: vec![0.0; ds.n()],
            sum: Vector::zeros(ds.d()),
        }
    }

    /// `∑_i table_i a_i` recomputed from scratch.
    pub fn table_sum(&self, ds: &GlmDataset) -> Vector {
        let mut out = Vector::zeros(ds.d());
        for (i, &g) in self.table.iter().enumerate() {
            ds.features().col_axpy(i, g, &mut out);
        }
        out
    }

    /// Refreshes entry `i` and steps along the table average.
    pub fn step(&mut self, ds: &GlmDataset, w: &mut Vector, i: usize, eta: f64) {
        let g = sample_slope(ds, i, w);
        ds.features().col_axpy(i, g - self.table[i], &mut self.sum);
        self.table[i] = g;
        let n = ds.n() as f64;
        *w *= 1.0 - eta * ds.lambda();
        w.axpy(-eta / n, &self.sum, 1.0);
    }
}

/// SVRG snapshot and its full gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrgState {
    pub snapshot: Vector,
    pub full_grad: Vector,
}

impl SvrgState {
    pub fn anchor(ds: &GlmDataset, w: &Vector) -> Result<Self> {
        Ok(Self {
            snapshot: w.clone(),
            full_grad: glm_grad_p(w, ds)?,
        })
    }

    /// `w ← w − η(∇f_i(w) − ∇f_i(w̃) + ∇P(w̃))`.
    pub fn step(&self, ds: &GlmDataset, w: &mut Vector, i: usize, eta: f64) {
        let dg = sample_slope(ds, i, w) - sample_slope(ds, i, &self.snapshot);
        let lambda = ds.lambda();
        // λ(w − w̃) + μ, then the sparse sample part.
        let mut v = &self.full_grad + (&*w - &self.snapshot) * lambda;
        ds.features().col_axpy(i, dg, &mut v);
        w.axpy(-eta, &v, 1.0);
    }
}

/// Metric evaluation and stopping shared by the three methods.
struct Monitor<'a> {
    ds: &'a GlmDataset,
    cfg: &'a BaselineConfig,
    watch: Stopwatch,
    records: Vec<TraceRecord>,
    nnz: f64,
    steps: usize,
    passes: f64,
    eval_every: usize,
}

impl<'a> Monitor<'a> {
    fn new(ds: &'a GlmDataset, cfg: &'a BaselineConfig) -> Self {
        Self {
            ds,
            cfg,
            watch: Stopwatch::new(),
            records: Vec::new(),
            nnz: ds.features().nnz().max(1) as f64,
            steps: 0,
            passes: 0.0,
            eval_every: cfg.eval_every.unwrap_or(ds.n()),
        }
    }

    fn charge_sample(&mut self, i: usize, times: f64) {
        self.passes += times * self.ds.features().col(i).0.len() as f64 / self.nnz;
    }

    fn evaluate(&mut self, w: &Vector) -> Result<Option<RunStatus>> {
        let grad = glm_grad_p(w, self.ds)?.norm();
        let mut rec = TraceRecord::new(self.steps, self.passes, self.watch.elapsed_s(), grad);
        rec.objective = Some(glm_objective(w, self.ds)?);
        self.records.push(rec);
        if !(grad <= DIVERGENCE_THRESHOLD) || !w.iter().all(|v| v.is_finite()) {
            return Ok(Some(RunStatus::Diverged));
        }
        if grad <= self.cfg.tol {
            return Ok(Some(RunStatus::Converged));
        }
        if self.passes >= self.cfg.max_passes {
            return Ok(Some(RunStatus::MaxIterations));
        }
        if let Some(budget) = self.cfg.time_budget_s {
            if self.watch.elapsed_s() > budget {
                return Ok(Some(RunStatus::TimeBudget));
            }
        }
        Ok(None)
    }

    /// Counts one inner step and evaluates at the cadence or when the pass
    /// budget runs out.
    fn after_step(&mut self, w: &Vector) -> Result<Option<RunStatus>> {
        self.steps += 1;
        if self.steps.is_multiple_of(self.eval_every) || self.passes >= self.cfg.max_passes {
            self.watch.pause();
            let out = self.evaluate(w);
            self.watch.resume();
            return out;
        }
        Ok(None)
    }

    fn finish(mut self, w: Vector, status: RunStatus) -> SolverTrace {
        self.watch.pause();
        SolverTrace {
            records: self.records,
            final_x: w,
            status,
            iterations: self.steps,
            passes: self.passes,
            seed: self.cfg.seed,
        }
    }
}

fn prepare(ds: &GlmDataset, cfg: &BaselineConfig, expected: BaselineMethod) -> Result<(f64, SolverRng)> {
    if cfg.method != expected {
        return Err(Error::BadParameter(format!(
            "config is for {}, not {}",
            cfg.method.as_str(),
            expected.as_str()
        )));
    }
    ds.ensure_nonempty()?;
    cfg.validate()?;
    Ok((cfg.resolve_stepsize(ds)?, seeded_rng(cfg.seed)))
}

pub fn sgd_run(ds: &GlmDataset, cfg: &BaselineConfig) -> Result<SolverTrace> {
    let (eta, mut rng) = prepare(ds, cfg, BaselineMethod::Sgd)?;
    let mut mon = Monitor::new(ds, cfg);
    let mut w = Vector::zeros(ds.d());
    if let Some(status) = mon.evaluate(&w)? {
        return Ok(mon.finish(w, status));
    }
    mon.watch.resume();
    loop {
        let i = rng.random_range(0..ds.n());
        sgd_step(ds, &mut w, i, eta);
        mon.charge_sample(i, 1.0);
        if let Some(status) = mon.after_step(&w)? {
            return Ok(mon.finish(w, status));
        }
    }
}

pub fn sag_run(ds: &GlmDataset, cfg: &BaselineConfig) -> Result<SolverTrace> {
    let (eta, mut rng) = prepare(ds, cfg, BaselineMethod::Sag)?;
    let mut mon = Monitor::new(ds, cfg);
    let mut w = Vector::zeros(ds.d());
    if let Some(status) = mon.evaluate(&w)? {
        return Ok(mon.finish(w, status));
    }
    let mut state = SagState::new(ds);
    mon.watch.resume();
    loop {
        let i = rng.random_range(0..ds.n());
        state.step(ds, &mut w, i, eta);
        mon.charge_sample(i, 1.0);
        if let Some(status) = mon.after_step(&w)? {
            return Ok(mon.finish(w, status));
        }
    }
}

/// SVRG with the last inner iterate as the next snapshot.
pub fn svrg_run(ds: &GlmDataset, cfg: &BaselineConfig) -> Result<SolverTrace> {
    let (eta, mut rng) = prepare(ds, cfg, BaselineMethod::Svrg)?;
    let inner = cfg.inner_loop.unwrap_or(ds.n());
    let mut mon = Monitor::new(ds, cfg);
    let mut w = Vector::zeros(ds.d());
    if let Some(status) = mon.evaluate(&w)? {
        return Ok(mon.finish(w, status));
    }
    mon.watch.resume();
    loop {
        let state = SvrgState::anchor(ds, &w)?;
        mon.passes += 1.0;
        for _ in 0..inner {
            let i = rng.random_range(0..ds.n());
            state.step(ds, &mut w, i, eta);
            mon.charge_sample(i, 2.0);
            if let Some(status) = mon.after_step(&w)? {
                return Ok(mon.finish(w, status));
            }
        }
    }
}

/// Dispatches on `cfg.method`.
pub fn baseline_run(ds: &GlmDataset, cfg: &BaselineConfig) -> Result<SolverTrace> {
    match cfg.method {
        BaselineMethod::Sgd => sgd_run(ds, cfg),
        BaselineMethod::Sag => sag_run(ds, cfg),
        BaselineMethod::Svrg => svrg_run(ds, cfg),
    }
}
