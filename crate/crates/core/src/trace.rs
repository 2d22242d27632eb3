//! Run records shared by all iterative methods.

use std::time::{Duration, Instant};

use crate::linalg::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxIterations,
    TimeBudget,
    Diverged,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxIterations => "max_iterations",
            RunStatus::TimeBudget => "time_budget",
            RunStatus::Diverged => "diverged",
        }
    }
}

/// One evaluation point of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    /// Number of completed iterations.
    pub iteration: usize,
    /// Effective data passes: stored entries of `A` touched, divided by `nnz(A)`.
    pub passes: f64,
    /// Solver time, with metric evaluations excluded.
    pub wallclock_s: f64,
    /// The stopping metric.
    pub metric: f64,
    /// `‖F(x)‖` for root-finding runs.
    pub residual_norm: Option<f64>,
    /// `f_{S,x}(x)` for the most recent sketch, before its step.
    pub sketched_value: Option<f64>,
    /// Objective value for optimization runs.
    pub objective: Option<f64>,
    /// Running minimum of `f_t(x^t)` over all completed iterations.
    pub best_sketched: Option<f64>,
    /// Running minimum of `‖F(x^t)‖²`.
    pub best_residual_sq: Option<f64>,
}

impl TraceRecord {
    pub fn new(iteration: usize, passes: f64, wallclock_s: f64, metric: f64) -> Self {
        Self {
            iteration,
            passes,
            wallclock_s,
            metric,
            residual_norm: None,
            sketched_value: None,
            objective: None,
            best_sketched: None,
            best_residual_sq: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
    pub final_x: Vector,
    pub status: RunStatus,
    pub iterations: usize,
    pub passes: f64,
    pub seed: u64,
}

impl SolverTrace {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Passes needed to reach the tolerance, `None` if it was never reached.
    pub fn passes_to_tol(&self) -> Option<f64> {
        self.converged().then_some(self.passes)
    }

    pub fn iterations_to_tol(&self) -> Option<usize> {
        self.converged().then_some(self.iterations)
    }
}

/// Monotonic clock that only accumulates while running, so evaluation work
/// can be left out of reported times.
#[derive(Debug, Default)]
pub struct Stopwatch {
    total: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn resume(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub fn pause(&mut self) {
        if let Some(t) = self.started.take() {
            self.total += t.elapsed();
        }
    }

    pub fn elapsed_s(&self) -> f64 {
        let running = self.started.map(|t| t.elapsed()).unwrap_or_default();
        (self.total + running).as_secs_f64()
    }
}
