//! Loading the dataset and running every method × repeat.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use snr_core::baselines::baseline_run;
use snr_core::data_io::{
    dataset_report, gen_artificial, normalize_samples, parse_libsvm_file, DatasetReport, LibsvmOptions,
};
use snr_core::tcs::{tcs_covariance, tcs_run_with_cov, TcsConfig};
use snr_core::{DenseMatrix, GlmDataset, RunStatus, SolverTrace};

use crate::config::{DataSource, ExperimentConfig, LambdaSpec};
use crate::methods::{MethodSpec, RunDefaults};
use crate::metrics::{
    trace_rows, write_manifest, write_metrics_file, DatasetSummary, Manifest, MetricsRow, RunEntry,
};
use crate::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// A loaded dataset with the quantities every run shares.
pub struct Workload {
    pub ds: GlmDataset,
    pub source: String,
    pub report: Option<DatasetReport>,
    cov: Option<Arc<DenseMatrix>>,
}

pub fn load_dataset(data: &DataSource, lambda: LambdaSpec, scale: bool) -> Result<(GlmDataset, String), HarnessError> {
    let (ds, source) = match data {
        DataSource::Libsvm(path) => {
            let opts = LibsvmOptions {
                n_features: None,
                lambda: match lambda {
                    LambdaSpec::Value(l) => Some(l),
                    LambdaSpec::InverseN => None,
                },
            };
            (parse_libsvm_file(path, opts)?, path.display().to_string())
        }
        DataSource::Artificial { n, d, c, seed } => {
            let ds = gen_artificial(*n, *d, *c, *seed)?;
            let ds = match lambda {
                LambdaSpec::Value(l) => ds.with_lambda(l)?,
                LambdaSpec::InverseN => ds,
            };
            (ds, format!("artificial(n={n},d={d},c={c},seed={seed})"))
        }
    };
    let ds = if scale { normalize_samples(&ds)? } else { ds };
    Ok((ds, source))
}

impl Workload {
    pub fn new(ds: GlmDataset, source: String, methods: &[MethodSpec]) -> Result<Self, HarnessError> {
        ds.ensure_nonempty()?;
        let report = match dataset_report(&ds) {
            Ok(r) => Some(r),
            Err(e) if methods.iter().any(MethodSpec::needs_report) => return Err(e.into()),
            Err(e) => {
                warn!("dataset report unavailable: {e}");
                None
            }
        };
        let cov = if methods.iter().any(|m| matches!(m, MethodSpec::Tcs(_))) {
            tcs_covariance(&ds)
        } else {
            None
        };
        Ok(Self { ds, source, report, cov })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let (ds, source) = load_dataset(&cfg.data, cfg.lambda, cfg.scale)?;
        let mut methods = cfg.methods.clone();
        if let Some(grid) = &cfg.grid {
            methods.push(MethodSpec::Tcs(grid.base.clone()));
        }
        Self::new(ds, source, &methods)
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            source: self.source.clone(),
            n: self.ds.n(),
            d: self.ds.d(),
            nnz: self.ds.features().nnz(),
            lambda: self.ds.lambda(),
            condition_number: self.report.map(|r| r.condition_number),
            smoothness_l: self.report.map(|r| r.smoothness_l),
        }
    }

    pub fn tcs_run(&self, cfg: &TcsConfig) -> Result<SolverTrace, HarnessError> {
        Ok(tcs_run_with_cov(&self.ds, cfg, self.cov.clone())?)
    }
}

/// Solver settings of one run, fully resolved.
#[derive(Debug, Clone)]
pub enum ResolvedRun {
    Tcs(TcsConfig),
    Baseline(snr_core::baselines::BaselineConfig),
}

/// One unit of work: a resolved solver config and where to write its trace.
#[derive(Debug, Clone)]
pub struct RunTask {
    pub run_id: String,
    pub method: String,
    pub repeat: usize,
    pub seed: u64,
    pub solver: ResolvedRun,
    /// File name inside the output directory.
    pub file: String,
}

impl RunTask {
    pub fn new(run_id: String, method: &MethodSpec, repeat: usize, seed: u64, work: &Workload, defaults: &RunDefaults) -> Self {
        let solver = match method {
            MethodSpec::Tcs(p) => ResolvedRun::Tcs(p.build(&work.ds, work.report.as_ref(), defaults, seed)),
            MethodSpec::Baseline(p) => ResolvedRun::Baseline(p.build(work.report.as_ref(), defaults, seed)),
        };
        Self {
            file: format!("{run_id}.csv"),
            run_id,
            method: method.to_string(),
            repeat,
            seed,
            solver,
        }
    }

    pub fn run(&self, work: &Workload) -> Result<SolverTrace, HarnessError> {
        match &self.solver {
            ResolvedRun::Tcs(cfg) => work.tcs_run(cfg),
            ResolvedRun::Baseline(cfg) => Ok(baseline_run(&work.ds, cfg)?),
        }
    }

    pub fn rows(&self, trace: &SolverTrace) -> Vec<MetricsRow> {
        trace_rows(trace, &self.run_id, &self.method, self.repeat, self.seed)
    }

    /// Runs the solver and writes its metrics file into `dir`. Failures are
    /// recorded in the entry rather than returned.
    pub fn execute(&self, work: &Workload, dir: &Path) -> (RunEntry, Option<SolverTrace>) {
        let outcome = self.run(work).and_then(|trace| {
            write_metrics_file(&self.rows(&trace), &dir.join(&self.file))?;
            Ok(trace)
        });
        let mut entry = RunEntry {
            run_id: self.run_id.clone(),
            method: self.method.clone(),
            repeat: self.repeat,
            seed: self.seed,
            file: None,
            status: "error".into(),
            iterations: 0,
            passes: 0.0,
            final_grad_norm: None,
            wallclock_s: None,
            error: None,
        };
        match outcome {
            Ok(trace) => {
                entry.file = Some(self.file.clone());
                entry.status = trace.status.as_str().into();
                entry.iterations = trace.iterations;
                entry.passes = trace.passes;
                entry.final_grad_norm = trace.last().map(|r| r.metric);
                entry.wallclock_s = trace.last().map(|r| r.wallclock_s);
                info!("{}: {} after {} iterations", self.run_id, entry.status, entry.iterations);
                (entry, Some(trace))
            }
            Err(e) => {
                warn!("{}: {e}", self.run_id);
                entry.error = Some(e.to_string());
                (entry, None)
            }
        }
    }
}

/// Runs `tasks` on at most `jobs` threads, preserving their order.
pub fn run_tasks(
    tasks: &[RunTask],
    work: &Workload,
    dir: &Path,
    jobs: usize,
) -> Result<Vec<(RunEntry, Option<SolverTrace>)>, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(|| tasks.par_iter().map(|t| t.execute(work, dir)).collect()))
}

pub fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub output_dir: PathBuf,
    pub manifest_path: PathBuf,
    pub runs: Vec<RunEntry>,
}

impl ExperimentSummary {
    /// True when every run finished without an error or divergence.
    pub fn all_ok(&self) -> bool {
        self.runs
            .iter()
            .all(|r| r.error.is_none() && r.status != RunStatus::Diverged.as_str())
    }
}

pub fn run_defaults(cfg: &ExperimentConfig) -> RunDefaults {
    RunDefaults {
        tol: cfg.tol,
        time_budget_s: cfg.time_budget_s,
        max_passes: cfg.max_passes,
        eval_every: cfg.eval_every,
    }
}

/// Runs every method `repeats` times with seeds `seed + repeat`, writing one
/// metrics file per run and a manifest into `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<ExperimentSummary, HarnessError> {
    let work = Workload::from_config(cfg)?;
    run_experiment_on(cfg, &work, jobs)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, work: &Workload, jobs: usize) -> Result<ExperimentSummary, HarnessError> {
    if cfg.methods.is_empty() {
        return Err(crate::ConfigError::key("methods", "missing").into());
    }
    create_dir(&cfg.output_dir)?;
    let defaults = run_defaults(cfg);
    let mut tasks = Vec::new();
    for (m, method) in cfg.methods.iter().enumerate() {
        for repeat in 0..cfg.repeats {
            let run_id = format!("m{m}_{}_r{repeat}", method.name());
            tasks.push(RunTask::new(run_id, method, repeat, cfg.seed + repeat as u64, work, &defaults));
        }
    }
    let results = run_tasks(&tasks, work, &cfg.output_dir, jobs)?;
    let runs: Vec<RunEntry> = results.into_iter().map(|(e, _)| e).collect();
    let manifest = Manifest {
        kind: "experiment".into(),
        harness_version: env!("CARGO_PKG_VERSION").into(),
        core_version: snr_core::VERSION.into(),
        config: cfg.to_json(),
        dataset: work.summary(),
        base_seed: cfg.seed,
        runs: runs.clone(),
    };
    let manifest_path = cfg.output_dir.join(MANIFEST_FILE);
    write_manifest(&manifest, &manifest_path)?;
    Ok(ExperimentSummary {
        output_dir: cfg.output_dir.clone(),
        manifest_path,
        runs,
    })
}
