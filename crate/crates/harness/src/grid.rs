//! Grid search over the coin probability `b` and the stepsize `γ` of TCS.
//!
//! `grid.csv` has the header
//!
//! ```text
//! rank,b_spec,b,gamma,status,iterations_to_tol,passes_to_tol,wallclock_s,final_grad_norm
//! ```
//!
//! Cells are ranked by median iterations to reach the tolerance, then by
//! median wall-clock time. Only cells whose every repeat converged are
//! ranked; the others keep an empty rank and their status.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use snr_core::tcs::BernoulliPreset;
use snr_core::RunStatus;

use crate::config::ExperimentConfig;
use crate::experiment::{create_dir, run_defaults, run_tasks, RunTask, Workload, MANIFEST_FILE};
use crate::methods::MethodSpec;
use crate::metrics::{write_manifest, Manifest, RunEntry};
use crate::HarnessError;

pub const GRID_FILE: &str = "grid.csv";
pub const GRID_RUNS_DIR: &str = "grid_runs";

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Converged,
    /// Stopped by an iteration or time limit.
    Unfinished(String),
    Diverged,
    Error(String),
}

impl CellStatus {
    pub fn label(&self) -> String {
        match self {
            CellStatus::Converged => "converged".into(),
            CellStatus::Unfinished(s) => s.clone(),
            CellStatus::Diverged => "diverged".into(),
            CellStatus::Error(e) => format!("error: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub b_spec: String,
    /// Resolved coin probability.
    pub b: f64,
    pub gamma: f64,
    pub status: CellStatus,
    pub iterations_to_tol: Option<f64>,
    pub passes_to_tol: Option<f64>,
    pub wallclock_s: Option<f64>,
    pub final_grad_norm: Option<f64>,
    pub rank: Option<usize>,
}

#[derive(Serialize)]
struct GridRow<'a> {
    rank: Option<usize>,
    b_spec: &'a str,
    b: f64,
    gamma: f64,
    status: String,
    iterations_to_tol: Option<f64>,
    passes_to_tol: Option<f64>,
    wallclock_s: Option<f64>,
    final_grad_norm: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

/// Assigns ranks 1, 2, … to converged cells by (iterations, wall-clock).
pub fn rank_cells(cells: &mut [GridCell]) {
    let mut order: Vec<usize> = (0..cells.len())
        .filter(|&i| cells[i].status == CellStatus::Converged)
        .collect();
    order.sort_by(|&i, &j| {
        let key = |c: &GridCell| (c.iterations_to_tol.unwrap_or(f64::INFINITY), c.wallclock_s.unwrap_or(f64::INFINITY));
        let (a, b) = (key(&cells[i]), key(&cells[j]));
        a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1))
    });
    for c in cells.iter_mut() {
        c.rank = None;
    }
    for (r, &i) in order.iter().enumerate() {
        cells[i].rank = Some(r + 1);
    }
}

fn preset_label(b: &BernoulliPreset) -> String {
    match b {
        BernoulliPreset::Uniform => "uniform".into(),
        BernoulliPreset::UniformMinus(d) => format!("uniform-{d}"),
        BernoulliPreset::LargeData => "large".into(),
        BernoulliPreset::Fixed(b) => b.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct GridSummary {
    pub grid_path: PathBuf,
    pub manifest_path: PathBuf,
    pub cells: Vec<GridCell>,
}

pub fn grid_search(cfg: &ExperimentConfig, jobs: usize) -> Result<GridSummary, HarnessError> {
    let work = Workload::from_config(cfg)?;
    grid_search_on(cfg, &work, jobs)
}

pub fn grid_search_on(cfg: &ExperimentConfig, work: &Workload, jobs: usize) -> Result<GridSummary, HarnessError> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| crate::ConfigError::key("grid_b", "a grid search needs `grid_b` and `grid_gamma`"))?;
    let runs_dir = cfg.output_dir.join(GRID_RUNS_DIR);
    create_dir(&runs_dir)?;
    let defaults = run_defaults(cfg);

    let mut specs = Vec::new();
    let mut tasks = Vec::new();
    for (bi, b) in grid.b.iter().enumerate() {
        for (gi, &gamma) in grid.gamma.iter().enumerate() {
            let mut params = grid.base.clone();
            params.b = Some(*b);
            params.gamma = Some(gamma);
            let method = MethodSpec::Tcs(params);
            for repeat in 0..grid.repeats {
                let run_id = format!("b{bi}_g{gi}_r{repeat}");
                tasks.push(RunTask::new(run_id, &method, repeat, cfg.seed + repeat as u64, work, &defaults));
            }
            specs.push((preset_label(b), gamma));
        }
    }
    let results = run_tasks(&tasks, work, &runs_dir, jobs)?;

    let mut cells = Vec::new();
    for (k, (b_spec, gamma)) in specs.into_iter().enumerate() {
        let chunk = &results[k * grid.repeats..(k + 1) * grid.repeats];
        let resolved_b = match &tasks[k * grid.repeats].solver {
            crate::experiment::ResolvedRun::Tcs(c) => c.b,
            crate::experiment::ResolvedRun::Baseline(_) => f64::NAN,
        };
        let status = if let Some(e) = chunk.iter().find_map(|(e, _)| e.error.clone()) {
            CellStatus::Error(e)
        } else if chunk.iter().any(|(e, _)| e.status == RunStatus::Diverged.as_str()) {
            CellStatus::Diverged
        } else if let Some((e, _)) = chunk.iter().find(|(e, _)| e.status != RunStatus::Converged.as_str()) {
            CellStatus::Unfinished(e.status.clone())
        } else {
            CellStatus::Converged
        };
        let traces: Vec<_> = chunk.iter().filter_map(|(_, t)| t.as_ref()).collect();
        let converged = status == CellStatus::Converged;
        cells.push(GridCell {
            b_spec,
            b: resolved_b,
            gamma,
            iterations_to_tol: if converged {
                median(traces.iter().filter_map(|t| t.iterations_to_tol()).map(|i| i as f64).collect())
            } else {
                None
            },
            passes_to_tol: if converged {
                median(traces.iter().filter_map(|t| t.passes_to_tol()).collect())
            } else {
                None
            },
            wallclock_s: median(traces.iter().filter_map(|t| t.last()).map(|r| r.wallclock_s).collect()),
            final_grad_norm: traces.iter().filter_map(|t| t.last()).map(|r| r.metric).reduce(f64::max),
            status,
            rank: None,
        });
    }
    rank_cells(&mut cells);

    let grid_path = cfg.output_dir.join(GRID_FILE);
    write_grid(&cells, &grid_path)?;
    let manifest = Manifest {
        kind: "grid".into(),
        harness_version: env!("CARGO_PKG_VERSION").into(),
        core_version: snr_core::VERSION.into(),
        config: cfg.to_json(),
        dataset: work.summary(),
        base_seed: cfg.seed,
        runs: results
            .into_iter()
            .map(|(mut e, _): (RunEntry, _)| {
                e.file = e.file.map(|f| format!("{GRID_RUNS_DIR}/{f}"));
                e
            })
            .collect(),
    };
    let manifest_path = cfg.output_dir.join(MANIFEST_FILE);
    write_manifest(&manifest, &manifest_path)?;
    Ok(GridSummary {
        grid_path,
        manifest_path,
        cells,
    })
}

pub fn write_grid(cells: &[GridCell], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    for c in cells {
        w.serialize(GridRow {
            rank: c.rank,
            b_spec: &c.b_spec,
            b: c.b,
            gamma: c.gamma,
            status: c.status.label(),
            iterations_to_tol: c.iterations_to_tol,
            passes_to_tol: c.passes_to_tol,
            wallclock_s: c.wallclock_s,
            final_grad_norm: c.final_grad_norm,
        })?;
    }
    w.flush()?;
    Ok(())
}
