//! Per-run metrics CSV and the experiment manifest.
//!
//! Every run file has the header
//!
//! ```text
//! run_id,method,repeat,iteration,passes,wallclock_s,grad_norm,objective,seed
//! ```
//!
//! and one row per metric evaluation. `passes` counts stored entries of the
//! feature matrix touched, divided by its number of stored entries;
//! `wallclock_s` excludes the time spent evaluating the metrics; `objective`
//! is empty when a solver does not report it. Files are UTF-8 with `\n` line
//! endings and floats in shortest round-trip form.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use snr_core::SolverTrace;

use crate::HarnessError;

pub const METRICS_HEADER: [&str; 9] = [
    "run_id",
    "method",
    "repeat",
    "iteration",
    "passes",
    "wallclock_s",
    "grad_norm",
    "objective",
    "seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub method: String,
    pub repeat: usize,
    pub iteration: usize,
    pub passes: f64,
    pub wallclock_s: f64,
    pub grad_norm: f64,
    pub objective: Option<f64>,
    pub seed: u64,
}

/// Converts a solver trace into CSV rows.
pub fn trace_rows(trace: &SolverTrace, run_id: &str, method: &str, repeat: usize, seed: u64) -> Vec<MetricsRow> {
    trace
        .records
        .iter()
        .map(|r| MetricsRow {
            run_id: run_id.to_string(),
            method: method.to_string(),
            repeat,
            iteration: r.iteration,
            passes: r.passes,
            wallclock_s: r.wallclock_s,
            grad_norm: r.metric,
            objective: r.objective,
            seed,
        })
        .collect()
}

pub fn write_metrics<W: Write>(rows: &[MetricsRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_file(rows: &[MetricsRow], path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_metrics(rows, BufWriter::new(file))
}

/// Reads a metrics file, checking the header and the per-run invariants
/// (one run per file, finite non-negative gradient norms, non-decreasing
/// wall-clock time).
pub fn read_metrics_file(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let schema = |reason: String| HarnessError::Schema {
        path: path.to_path_buf(),
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| schema(e.to_string()))?;
    let header = rdr.headers().map_err(|e| schema(e.to_string()))?.clone();
    if header.iter().ne(METRICS_HEADER.iter().copied()) {
        return Err(schema(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for (k, rec) in rdr.deserialize().enumerate() {
        let row: MetricsRow = rec.map_err(|e| schema(format!("row {}: {e}", k + 1)))?;
        if !(row.grad_norm >= 0.0) {
            return Err(schema(format!("row {}: grad_norm {} is not a non-negative number", k + 1, row.grad_norm)));
        }
        if let Some(prev) = rows.last() {
            if prev.run_id != row.run_id {
                return Err(schema(format!("row {}: run_id changes within the file", k + 1)));
            }
            if row.wallclock_s < prev.wallclock_s {
                return Err(schema(format!("row {}: wallclock_s decreases", k + 1)));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// One entry of the manifest's run list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run_id: String,
    pub method: String,
    pub repeat: usize,
    pub seed: u64,
    /// Metrics file relative to the output directory; absent when the run failed.
    pub file: Option<String>,
    pub status: String,
    pub iterations: usize,
    pub passes: f64,
    pub final_grad_norm: Option<f64>,
    pub wallclock_s: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n: usize,
    pub d: usize,
    pub nnz: usize,
    pub lambda: f64,
    pub condition_number: Option<f64>,
    pub smoothness_l: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub harness_version: String,
    pub core_version: String,
    pub config: serde_json::Value,
    pub dataset: DatasetSummary,
    pub base_seed: u64,
    pub runs: Vec<RunEntry>,
}

pub fn write_manifest(manifest: &Manifest, path: &Path) -> Result<(), HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, manifest)?;
    out.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
