//! Solves a small linear system with subsampled sketches, then trains a
//! logistic regression with the tossing-coin solver.

use snr_core::data_io::gen_artificial;
use snr_core::problems::LinearSystem;
use snr_core::tcs::{tcs_run, TcsConfig};
use snr_core::{run_snr, DenseMatrix, SketchDistribution, SnrConfig, Vector};

fn main() -> snr_core::Result<()> {
    let a = DenseMatrix::from_row_slice(3, 2, &[2.0, 1.0, 1.0, 3.0, 0.0, 1.0]);
    let x_star = Vector::from_column_slice(&[1.0, -1.0]);
    let sys = LinearSystem::new(a.clone(), &a * &x_star);
    let dist = SketchDistribution::UniformSubsample { tau: 2 };
    let config = SnrConfig {
        max_iters: 500,
        eval_every: 10,
        ..SnrConfig::default()
    };
    let trace = run_snr(&sys, &dist, &Vector::zeros(2), &config, None)?;
    println!("linear system: {} after {} iterations", trace.status.as_str(), trace.iterations);

    let ds = gen_artificial(2000, 20, 0.9, 1)?;
    let mut cfg = TcsConfig::for_dataset(&ds);
    cfg.eval_every = 100;
    let trace = tcs_run(&ds, &cfg)?;
    let last = trace.last().expect("at least one record");
    println!(
        "logistic regression: {} after {} iterations, {:.1} passes, gradient norm {:.2e}",
        trace.status.as_str(),
        trace.iterations,
        trace.passes,
        last.metric
    );
    Ok(())
}
