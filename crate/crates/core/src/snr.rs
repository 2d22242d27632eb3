//! The generic sketched Newton-Raphson engine.
//!
//! With `H_S(x) = S (Sᵀ DF(x)ᵀ DF(x) S)† Sᵀ`, one step reads
//! `x⁺ = x − γ DF(x) H_S(x) F(x)`, which is a stochastic gradient step on
//! `f_{S,y}(x) = ½ F(x)ᵀ H_S(y) F(x)` taken at `y = x`.

use crate::error::{Error, Result};
use crate::linalg::{
    ensure_finite_vec, lambda_min_nonzero, lstsq_min_norm, solve_least_norm_psd, spectral_norm,
    DenseMatrix, Vector, DEFAULT_REL_TOL,
};
use crate::problems::{df_dense, NonlinearSystem};
use crate::rng::{seeded_rng, SolverRng};
use crate::sketches::{SketchContext, SketchDistribution, SketchRealization};
use crate::trace::{RunStatus, SolverTrace, Stopwatch, TraceRecord};

/// Runs abort once `‖F(x)‖` exceeds this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct SnrConfig {
    pub gamma: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub eval_every: usize,
    pub seed: u64,
    pub time_budget_s: Option<f64>,
    pub rel_tol: f64,
}

impl Default for SnrConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            max_iters: 10_000,
            stop_tol: 1e-10,
            eval_every: 1000,
            seed: 0,
            time_budget_s: None,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

impl SnrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 2.0) {
            return Err(Error::BadParameter(format!("gamma {} must lie in (0, 2)", self.gamma)));
        }
        if self.eval_every == 0 {
            return Err(Error::BadParameter("eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Pieces of one sketched Newton solve at a point.
struct SketchedSolve {
    /// `DF(x) S`
    js: DenseMatrix,
    /// `(Sᵀ DFᵀ DF S)† Sᵀ F`
    coef: Vector,
    /// `½ (SᵀF)ᵀ (Sᵀ DFᵀ DF S)† (SᵀF)`
    value: f64,
}

fn check_point(sys: &dyn NonlinearSystem, x: &Vector) -> Result<()> {
    if x.len() != sys.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.input_dim(),
            got: x.len(),
        });
    }
    ensure_finite_vec(x, "iterate")
}

/// Solves the sketched system with the Gram matrix taken at `y` and the
/// residual taken at `x`.
fn sketched_solve(
    sys: &dyn NonlinearSystem,
    x: &Vector,
    y: &Vector,
    s: &SketchRealization,
    rel_tol: f64,
) -> Result<SketchedSolve> {
    check_point(sys, x)?;
    check_point(sys, y)?;
    let js_y = s.jacobian_product(sys, y)?;
    let gram = js_y.tr_mul(&js_y);
    let f = sys.eval(x);
    ensure_finite_vec(&f, "F(x)")?;
    let sf = s.transpose_apply(&f)?;
    let coef = solve_least_norm_psd(&gram, &sf, rel_tol)?;
    let value = 0.5 * sf.dot(&coef);
    Ok(SketchedSolve {
        js: js_y,
        coef,
        value: value.max(0.0),
    })
}

/// `f_{S,y}(x) = ½ (SᵀF(x))ᵀ (Sᵀ DF(y)ᵀ DF(y) S)† (SᵀF(x))`.
pub fn sketched_metric_value(
    sys: &dyn NonlinearSystem,
    x: &Vector,
    y: &Vector,
    s: &SketchRealization,
) -> Result<f64> {
    Ok(sketched_solve(sys, x, y, s, DEFAULT_REL_TOL)?.value)
}

/// `∇f_{S,y}(x) = DF(x) H_S(y) F(x)`.
pub fn sketched_metric_grad(
    sys: &dyn NonlinearSystem,
    x: &Vector,
    y: &Vector,
    s: &SketchRealization,
) -> Result<Vector> {
    let solve = sketched_solve(sys, x, y, s, DEFAULT_REL_TOL)?;
    if x == y {
        return Ok(&solve.js * &solve.coef);
    }
    let js_x = s.jacobian_product(sys, x)?;
    Ok(js_x * solve.coef)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::BadParameter(format!("stepsize {gamma} must be positive")))
    }
}

/// One sketched Newton-Raphson step.
pub fn snr_step(sys: &dyn NonlinearSystem, x: &Vector, s: &SketchRealization, gamma: f64) -> Result<Vector> {
    check_gamma(gamma)?;
    let solve = sketched_solve(sys, x, x, s, DEFAULT_REL_TOL)?;
    Ok(x - (&solve.js * &solve.coef) * gamma)
}

/// Step projected in the norm induced by a positive-definite `W`:
/// `x − γ W⁻¹DF S (Sᵀ DFᵀ W⁻¹ DF S)† SᵀF`.
pub fn snr_step_weighted(
    sys: &dyn NonlinearSystem,
    x: &Vector,
    s: &SketchRealization,
    gamma: f64,
    w: &DenseMatrix,
) -> Result<Vector> {
    check_gamma(gamma)?;
    check_point(sys, x)?;
    let p = sys.input_dim();
    if w.nrows() != p || w.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: w.nrows(),
        });
    }
    let asym = (w - w.transpose()).amax();
    if !w.iter().all(|v| v.is_finite()) || asym > 1e-10 * w.amax().max(1.0) {
        return Err(Error::SingularW);
    }
    let chol = nalgebra::Cholesky::new(w.clone()).ok_or(Error::SingularW)?;
    let js = s.jacobian_product(sys, x)?;
    let z = chol.solve(&js);
    let gram = js.tr_mul(&z);
    let gram = (&gram + gram.transpose()) * 0.5;
    let f = sys.eval(x);
    let sf = s.transpose_apply(&f)?;
    let coef = solve_least_norm_psd(&gram, &sf, DEFAULT_REL_TOL)?;
    Ok(x - (z * coef) * gamma)
}

/// Projection of `x` onto `{x′ : Sᵀ DF(x)ᵀ (x′ − x) = −γ SᵀF(x)}` through a
/// dense KKT solve. Verification route for small systems.
pub fn sketch_and_project_oracle(
    sys: &dyn NonlinearSystem,
    x: &Vector,
    s: &SketchRealization,
    gamma: f64,
) -> Result<Vector> {
    check_point(sys, x)?;
    let p = sys.input_dim();
    let c = (df_dense(sys, x) * s.to_dense()).transpose();
    let tau = c.nrows();
    let r = -s.transpose_apply(&sys.eval(x))? * gamma;
    let mut kkt = DenseMatrix::zeros(p + tau, p + tau);
    kkt.view_mut((0, 0), (p, p)).fill_with_identity();
    kkt.view_mut((0, p), (p, tau)).copy_from(&c.transpose());
    kkt.view_mut((p, 0), (tau, p)).copy_from(&c);
    let mut rhs = Vector::zeros(p + tau);
    rhs.rows_mut(p, tau).copy_from(&r);
    let sol = lstsq_min_norm(&kkt, &rhs, 1e-13)?;
    let delta = sol.rows(0, p).into_owned();
    let residual = (&c * &delta - &r).norm();
    if residual > 1e-8 * (1.0 + r.norm()) {
        return Err(Error::InfeasibleConstraint { residual });
    }
    Ok(x + delta)
}

/// Least-norm minimizer `d` of `‖DF(x)ᵀd + γF(x)‖²_{H_S(x)}`, added to `x`.
/// Verification route for small systems.
pub fn gauss_newton_step(
    sys: &dyn NonlinearSystem,
    x: &Vector,
    s: &SketchRealization,
    gamma: f64,
) -> Result<Vector> {
    check_point(sys, x)?;
    let df = df_dense(sys, x);
    let sd = s.to_dense();
    let js = &df * &sd;
    let gram = js.tr_mul(&js);
    let gram_pinv = crate::linalg::pseudo_inverse(&gram, 1e-12)?;
    let h = &sd * gram_pinv * sd.transpose();
    let f = sys.eval(x);
    let normal = &df * &h * df.transpose();
    let rhs = -(&df * (&h * f)) * gamma;
    let d = lstsq_min_norm(&normal, &rhs, 1e-12)?;
    Ok(x + d)
}

/// Runs SNR from `x0` until `metric(x) ≤ stop_tol`, the iteration limit, or
/// the time budget. The default metric is `‖F(x)‖`.
pub fn run_snr(
    sys: &dyn NonlinearSystem,
    dist: &SketchDistribution,
    x0: &Vector,
    config: &SnrConfig,
    metric: Option<&dyn Fn(&Vector) -> f64>,
) -> Result<SolverTrace> {
    config.validate()?;
    check_point(sys, x0)?;
    let m = sys.output_dim();
    dist.validate(m)?;
    let eval_metric = |x: &Vector, f: &Vector| match metric {
        Some(mf) => mf(x),
        None => f.norm(),
    };

    let mut rng: SolverRng = seeded_rng(config.seed);
    let mut watch = Stopwatch::new();
    let mut x = x0.clone();
    let mut records = Vec::new();

    let f0 = sys.eval(&x);
    let mut best_sketched = f64::INFINITY;
    let mut best_residual_sq = f0.norm_squared();
    let mut rec = TraceRecord::new(0, 0.0, 0.0, eval_metric(&x, &f0));
    rec.residual_norm = Some(f0.norm());
    rec.best_residual_sq = Some(best_residual_sq);
    let done = rec.metric <= config.stop_tol;
    records.push(rec);
    if done {
        return Ok(SolverTrace {
            records,
            final_x: x,
            status: RunStatus::Converged,
            iterations: 0,
            passes: 0.0,
            seed: config.seed,
        });
    }

    let mut status = RunStatus::MaxIterations;
    let mut iterations = 0;
    for k in 0..config.max_iters {
        watch.resume();
        let f = sys.eval(&x);
        let fnorm = f.norm();
        if !(fnorm <= DIVERGENCE_THRESHOLD) {
            watch.pause();
            status = RunStatus::Diverged;
            break;
        }
        best_residual_sq = best_residual_sq.min(fnorm * fnorm);
        let s = dist
            .sample(m, Some(SketchContext { system: sys, x: &x }), &mut rng)
            .map_err(|e| e.at_iteration(k))?;
        let solve = sketched_solve(sys, &x, &x, &s, config.rel_tol).map_err(|e| e.at_iteration(k))?;
        x -= (&solve.js * &solve.coef) * config.gamma;
        watch.pause();
        iterations = k + 1;
        best_sketched = best_sketched.min(solve.value);

        let last = k + 1 == config.max_iters;
        if iterations % config.eval_every == 0 || last {
            let fx = sys.eval(&x);
            let mut rec = TraceRecord::new(iterations, 0.0, watch.elapsed_s(), eval_metric(&x, &fx));
            rec.residual_norm = Some(fx.norm());
            rec.sketched_value = Some(solve.value);
            rec.best_sketched = Some(best_sketched);
            rec.best_residual_sq = Some(best_residual_sq.min(fx.norm_squared()));
            let metric_value = rec.metric;
            records.push(rec);
            if !x.iter().all(|v| v.is_finite()) || !(fx.norm() <= DIVERGENCE_THRESHOLD) {
                status = RunStatus::Diverged;
                break;
            }
            if metric_value <= config.stop_tol {
                status = RunStatus::Converged;
                break;
            }
        }
        if let Some(budget) = config.time_budget_s {
            if watch.elapsed_s() > budget {
                status = RunStatus::TimeBudget;
                break;
            }
        }
    }
    Ok(SolverTrace {
        records,
        final_x: x,
        status,
        iterations,
        passes: 0.0,
        seed: config.seed,
    })
}

/// Diagnostic estimate of the rate constants of the sublinear bound on `‖F‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    pub l_bound: f64,
    pub samples: usize,
}

/// Largest system size for which `E[H_S]` may be formed.
pub const RHO_MAX_DIM: usize = 200;

/// `ρ = min_x λ⁺_min(DF(x) Ê[H_S(x)] DF(x)ᵀ)` with a Monte Carlo average of
/// `H_S`, and `L = max_x ‖DF(x)‖`.
pub fn estimate_rho(
    sys: &dyn NonlinearSystem,
    points: &[Vector],
    dist: &SketchDistribution,
    samples: usize,
    rng: &mut SolverRng,
) -> Result<RhoEstimate> {
    let m = sys.output_dim();
    if m > RHO_MAX_DIM || sys.input_dim() > RHO_MAX_DIM {
        return Err(Error::BadParameter(format!(
            "rho estimation is limited to {RHO_MAX_DIM} dimensions"
        )));
    }
    if samples == 0 || points.is_empty() {
        return Err(Error::BadParameter("need at least one point and one sample".into()));
    }
    let mut rho = f64::INFINITY;
    let mut l_bound = 0.0_f64;
    for x in points {
        check_point(sys, x)?;
        let df = df_dense(sys, x);
        l_bound = l_bound.max(spectral_norm(&df));
        let mut eh = DenseMatrix::zeros(m, m);
        for _ in 0..samples {
            let s = dist.sample(m, Some(SketchContext { system: sys, x }), rng)?;
            let sd = s.to_dense();
            let js = &df * &sd;
            let gram = js.tr_mul(&js);
            let tau = gram.nrows();
            let mut pinv = DenseMatrix::zeros(tau, tau);
            for j in 0..tau {
                let mut e = Vector::zeros(tau);
                e[j] = 1.0;
                pinv.set_column(j, &solve_least_norm_psd(&gram, &e, DEFAULT_REL_TOL)?);
            }
            eh += &sd * pinv * sd.transpose();
        }
        eh /= samples as f64;
        let proj = &df * eh * df.transpose();
        let proj = (&proj + proj.transpose()) * 0.5;
        rho = rho.min(lambda_min_nonzero(&proj, 1e-10)?);
    }
    Ok(RhoEstimate {
        rho: if rho.is_finite() { rho.clamp(0.0, 1.0) } else { 0.0 },
        l_bound,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{LinearSystem, ScalarProblem};

    fn quad() -> ScalarProblem {
        ScalarProblem::new(|x| x * x - 4.0, |x| 2.0 * x)
    }

    #[test]
    fn newton_step_on_diagonal_system_is_exact() {
        let sys = LinearSystem::new(
            DenseMatrix::from_diagonal(&Vector::from_column_slice(&[2.0, 4.0])),
            Vector::from_column_slice(&[2.0, 8.0]),
        );
        let x = snr_step(&sys, &Vector::zeros(2), &SketchRealization::identity(2), 1.0).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn scalar_hand_evaluations() {
        let sys = quad();
        let s = SketchRealization::identity(1);
        let x = Vector::from_element(1, 3.0);
        let next = snr_step(&sys, &x, &s, 1.0).unwrap();
        assert!((next[0] - 13.0 / 6.0).abs() < 1e-15);
        let gn = gauss_newton_step(&sys, &x, &s, 1.0).unwrap();
        assert!((gn[0] - 13.0 / 6.0).abs() < 1e-14);
        assert_eq!(gauss_newton_step(&sys, &x, &s, 0.0).unwrap(), x);
        assert_eq!(sketch_and_project_oracle(&sys, &x, &s, 0.0).unwrap(), x);
    }

    #[test]
    fn metric_for_identity_map() {
        let sys = ScalarProblem::new(|x| x, |_| 1.0);
        let s = SketchRealization::identity(1);
        let x = Vector::from_element(1, 3.0);
        let y = Vector::from_element(1, -7.0);
        assert_eq!(sketched_metric_value(&sys, &x, &y, &s).unwrap(), 4.5);
        assert_eq!(sketched_metric_grad(&sys, &x, &x, &s).unwrap()[0], 3.0);
    }

    #[test]
    fn root_is_a_fixed_point() {
        let sys = quad();
        let root = Vector::from_element(1, 2.0);
        let s = SketchRealization::identity(1);
        assert_eq!(snr_step(&sys, &root, &s, 1.7).unwrap(), root);
        assert_eq!(sketched_metric_value(&sys, &root, &root, &s).unwrap(), 0.0);
        assert_eq!(sketched_metric_grad(&sys, &root, &root, &s).unwrap()[0], 0.0);
    }

    #[test]
    fn run_converges_in_one_newton_step_on_linear_system() {
        let sys = LinearSystem::new(
            DenseMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
            Vector::from_column_slice(&[1.0, -1.0]),
        );
        let cfg = SnrConfig {
            eval_every: 1,
            ..Default::default()
        };
        let trace = run_snr(&sys, &SketchDistribution::Identity, &Vector::zeros(2), &cfg, None).unwrap();
        assert_eq!(trace.status, RunStatus::Converged);
        assert_eq!(trace.iterations, 1);
    }

    #[test]
    fn run_flags_divergence() {
        let cfg = SnrConfig {
            eval_every: 1,
            max_iters: 100,
            ..Default::default()
        };
        // Newton on x⁴ + 1 (no real root) from near zero is thrown far away.
        let sys = ScalarProblem::new(|x: f64| x.powi(4) + 1.0, |x: f64| 4.0 * x.powi(3));
        let t = run_snr(&sys, &SketchDistribution::Identity, &Vector::from_element(1, 1e-3), &cfg, None).unwrap();
        assert_eq!(t.status, RunStatus::Diverged);
    }

    #[test]
    fn rho_is_one_for_identity_sketch() {
        let sys = LinearSystem::new(
            DenseMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
            Vector::zeros(2),
        );
        let mut rng = seeded_rng(1);
        let est = estimate_rho(&sys, &[Vector::zeros(2)], &SketchDistribution::Identity, 3, &mut rng).unwrap();
        assert!((est.rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_gamma() {
        let cfg = SnrConfig {
            gamma: 2.0,
            ..Default::default()
        };
        assert!(run_snr(&quad(), &SketchDistribution::Identity, &Vector::from_element(1, 3.0), &cfg, None).is_err());
    }
}
