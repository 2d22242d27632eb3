use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use snr_core::data_io::{dataset_report, gen_artificial, write_libsvm_file};
use snr_core::RunStatus;
use snr_harness::config::{DataSource, ExperimentConfig, LambdaSpec};
use snr_harness::experiment::{load_dataset, run_defaults, run_experiment, RunTask, Workload};
use snr_harness::grid::grid_search;
use snr_harness::metrics::write_metrics;
use snr_harness::MethodSpec;

#[derive(Parser)]
#[command(name = "snr", version, about = "Sketched Newton-Raphson benchmark runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method once and print its metrics CSV.
    Solve(SolveArgs),
    /// Run every method and repeat of a config file.
    Bench(ConfigArgs),
    /// Generate a dataset in LibSVM format.
    Datagen(DatagenArgs),
    /// Print size, conditioning and smoothness of a dataset.
    Inspect(InspectArgs),
    /// Grid search over the coin probability and stepsize of TCS.
    Grid(ConfigArgs),
}

#[derive(Args)]
struct DataArgs {
    /// LibSVM file; without it the artificial generator is used.
    #[arg(long, conflicts_with_all = ["n", "d", "c", "data_seed"])]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 0.9)]
    c: f64,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    /// Regularization: a number or "1/n".
    #[arg(long, default_value = "1/n")]
    lambda: String,
    /// Rescale every sample to unit norm.
    #[arg(long)]
    scale: bool,
}

impl DataArgs {
    fn source(&self) -> DataSource {
        match &self.data {
            Some(p) => DataSource::Libsvm(p.clone()),
            None => DataSource::Artificial {
                n: self.n,
                d: self.d,
                c: self.c,
                seed: self.data_seed,
            },
        }
    }
}

fn parse_lambda(text: &str) -> Result<LambdaSpec> {
    if text.replace(' ', "") == "1/n" {
        return Ok(LambdaSpec::InverseN);
    }
    let l: f64 = text.parse().with_context(|| format!("--lambda expects a number or 1/n, got {text}"))?;
    if !(l > 0.0 && l.is_finite()) {
        bail!("--lambda must be positive");
    }
    Ok(LambdaSpec::Value(l))
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Method string, e.g. "tcs(tau_n=150)" or "svrg(stepsize=1/L)".
    #[arg(long, default_value = "tcs")]
    method: String,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Seconds before the run is stopped.
    #[arg(long, default_value_t = 60.0)]
    time_budget_s: f64,
    /// Pass budget of the first-order methods.
    #[arg(long, default_value_t = 100.0)]
    max_passes: f64,
    /// Metric cadence in solver steps.
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Metrics CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (flat TOML).
    #[arg(long)]
    config: PathBuf,
    /// Number of runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Overrides `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    /// Generate the Gaussian dataset with Toeplitz covariance.
    #[arg(long, required = true)]
    artificial: bool,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.9)]
    c: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "1/n")]
    lambda: String,
    #[arg(long)]
    scale: bool,
    /// Print JSON instead of key: value lines.
    #[arg(long)]
    json: bool,
}

fn solve(args: SolveArgs) -> Result<ExitCode> {
    let method = MethodSpec::parse(&args.method).map_err(anyhow::Error::msg)?;
    let (ds, source) = load_dataset(&args.data.source(), parse_lambda(&args.data.lambda)?, args.data.scale)?;
    let work = Workload::new(ds, source, std::slice::from_ref(&method))?;
    let cfg = ExperimentConfig {
        tol: args.tol,
        time_budget_s: Some(args.time_budget_s),
        max_passes: args.max_passes,
        eval_every: args.eval_every,
        seed: args.seed,
        ..Default::default()
    };
    let task = RunTask::new(format!("{}_r0", method.name()), &method, 0, args.seed, &work, &run_defaults(&cfg));
    let trace = task.run(&work)?;
    let rows = task.rows(&trace);
    match &args.out {
        Some(path) => snr_harness::metrics::write_metrics_file(&rows, path)?,
        None => write_metrics(&rows, std::io::stdout().lock())?,
    }
    let last = trace.last().map_or(f64::NAN, |r| r.metric);
    eprintln!(
        "{}: {} after {} iterations, {:.2} passes, gradient norm {last:.3e}",
        method,
        trace.status.as_str(),
        trace.iterations,
        trace.passes
    );
    Ok(if trace.status == RunStatus::Diverged {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn bench(args: ConfigArgs) -> Result<ExitCode> {
    let cfg = load_config(&args)?;
    let summary = run_experiment(&cfg, args.jobs)?;
    for r in &summary.runs {
        let grad = r.final_grad_norm.map_or("-".into(), |g| format!("{g:.3e}"));
        eprintln!("{:<24} {:<14} passes {:>10.2}  grad {grad}", r.run_id, r.status, r.passes);
    }
    eprintln!("manifest: {}", summary.manifest_path.display());
    Ok(if summary.all_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn grid(args: ConfigArgs) -> Result<ExitCode> {
    let cfg = load_config(&args)?;
    let summary = grid_search(&cfg, args.jobs)?;
    for c in &summary.cells {
        let rank = c.rank.map_or("-".into(), |r| r.to_string());
        let iters = c.iterations_to_tol.map_or("-".into(), |i| i.to_string());
        eprintln!("rank {rank:>3}  b {:<14} gamma {:<6} {:<14} iterations {iters}", c.b_spec, c.gamma, c.status.label());
    }
    eprintln!("grid: {}", summary.grid_path.display());
    let errored = summary
        .cells
        .iter()
        .any(|c| matches!(c.status, snr_harness::grid::CellStatus::Error(_)));
    Ok(if errored { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn datagen(args: DatagenArgs) -> Result<ExitCode> {
    debug_assert!(args.artificial);
    let ds = gen_artificial(args.n, args.d, args.c, args.seed)?;
    write_libsvm_file(&ds, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("wrote {} samples with {} features to {}", ds.n(), ds.d(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn inspect(args: InspectArgs) -> Result<ExitCode> {
    let (ds, source) = load_dataset(&DataSource::Libsvm(args.data.clone()), parse_lambda(&args.lambda)?, args.scale)?;
    let r = dataset_report(&ds)?;
    let fields = [
        ("n", serde_json::json!(r.n)),
        ("d", serde_json::json!(r.d)),
        ("nnz", serde_json::json!(r.nnz)),
        ("density", serde_json::json!(r.density)),
        ("lambda", serde_json::json!(ds.lambda())),
        ("lambda_max_aat", serde_json::json!(r.lambda_max_aat)),
        ("condition_number", serde_json::json!(r.condition_number)),
        ("smoothness_l", serde_json::json!(r.smoothness_l)),
    ];
    let mut out = std::io::stdout().lock();
    if args.json {
        let mut map = serde_json::Map::new();
        map.insert("source".into(), source.into());
        for (k, v) in fields {
            map.insert(k.into(), v);
        }
        writeln!(out, "{}", serde_json::to_string_pretty(&map)?)?;
    } else {
        writeln!(out, "source: {source}")?;
        for (k, v) in fields {
            writeln!(out, "{k}: {v}")?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Datagen(a) => datagen(a),
        Command::Inspect(a) => inspect(a),
        Command::Grid(a) => grid(a),
    }
}
