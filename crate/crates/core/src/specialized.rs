//! Closed-form special cases of the sketched Newton step: full Newton-Raphson,
//! nonlinear Kaczmarz, the stochastic Newton method (plain and relaxed) and
//! randomized subspace Newton.

use nalgebra::Cholesky;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, solve_least_norm_psd, DenseMatrix, Vector, DEFAULT_REL_TOL};
use crate::problems::{df_dense, NonlinearSystem, SmoothLoss};
use crate::rng::SolverRng;

/// Newton direction `n(x) = −(DF(x)ᵀ)† F(x)`.
pub fn newton_direction(sys: &dyn NonlinearSystem, x: &Vector) -> Result<Vector> {
    let jac = df_dense(sys, x).transpose();
    Ok(-lstsq_min_norm(&jac, &sys.eval(x), DEFAULT_REL_TOL)?)
}

/// `x − γ (DF(x)ᵀ)† F(x)`, solved as a least-squares problem.
pub fn newton_raphson_step(sys: &dyn NonlinearSystem, x: &Vector, gamma: f64) -> Result<Vector> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::BadParameter(format!("stepsize {gamma} must be positive")));
    }
    Ok(x + newton_direction(sys, x)? * gamma)
}

/// `x − γ F_i(x)/‖∇F_i(x)‖² · ∇F_i(x)`.
pub fn kaczmarz_step(sys: &dyn NonlinearSystem, x: &Vector, i: usize, gamma: f64) -> Result<Vector> {
    if i >= sys.output_dim() {
        return Err(Error::BadSubset(format!("row {i} out of range")));
    }
    let g = sys.df_columns(x, &[i]).column(0).into_owned();
    let fi = sys.eval_component(x, i);
    let gsq = g.norm_squared();
    if gsq.sqrt() <= 1e-14 * (1.0 + fi.abs()) {
        return Err(Error::DegenerateRow { row: i });
    }
    Ok(x - g * (gamma * fi / gsq))
}

/// Iterate and cached sums of the stochastic Newton method on
/// `P(w) = (1/n)∑ φ_i(w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnmState {
    pub w: Vector,
    pub alphas: Vec<Vector>,
    /// `(1/n)∑ ∇²φ_i(α_i)`
    pub hess_sum: DenseMatrix,
    /// `(1/n)∑ (∇²φ_i(α_i)α_i − ∇φ_i(α_i))`
    pub vec_sum: Vector,
    terms: Vec<(DenseMatrix, Vector)>,
    steps_since_refresh: usize,
}

fn snm_term<L: SmoothLoss>(loss: &L, alpha: &Vector) -> (DenseMatrix, Vector) {
    let h = loss.hessian(alpha);
    let v = &h * alpha - loss.gradient(alpha);
    (h, v)
}

impl SnmState {
    pub fn new<L: SmoothLoss>(losses: &[L], w: Vector, alphas: Vec<Vector>) -> Result<Self> {
        if losses.is_empty() || alphas.len() != losses.len() {
            return Err(Error::DimensionMismatch {
                expected: losses.len(),
                got: alphas.len(),
            });
        }
        let d = w.len();
        if alphas.iter().any(|a| a.len() != d) || losses.iter().any(|l| l.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: alphas[0].len() });
        }
        let mut state = Self {
            w,
            alphas,
            hess_sum: DenseMatrix::zeros(d, d),
            vec_sum: Vector::zeros(d),
            terms: Vec::new(),
            steps_since_refresh: 0,
        };
        state.refresh(losses);
        Ok(state)
    }

    /// Recomputes every cached term from scratch.
    pub fn refresh<L: SmoothLoss>(&mut self, losses: &[L]) {
        let n = losses.len() as f64;
        let d = self.w.len();
        self.terms = losses.iter().zip(&self.alphas).map(|(l, a)| snm_term(l, a)).collect();
        self.hess_sum = DenseMatrix::zeros(d, d);
        self.vec_sum = Vector::zeros(d);
        for (h, v) in &self.terms {
            self.hess_sum += h / n;
            self.vec_sum += v / n;
        }
        self.steps_since_refresh = 0;
    }

    /// Largest deviation of the caches from a fresh recomputation.
    pub fn cache_drift<L: SmoothLoss>(&self, losses: &[L]) -> f64 {
        let mut fresh = self.clone();
        fresh.refresh(losses);
        (&fresh.hess_sum - &self.hess_sum)
            .amax()
            .max((&fresh.vec_sum - &self.vec_sum).amax())
    }
}

/// One SNM step: `w⁺ = H̄⁻¹ v̄` and `α_i⁺ = w⁺` for `i ∈ B`.
pub fn snm_step<L: SmoothLoss>(state: &SnmState, losses: &[L], subset: &[usize]) -> Result<SnmState> {
    snm_relaxed_step(state, losses, subset, 1.0)
}

/// Relaxed SNM step: `w⁺ = γ H̄⁻¹ v̄ + (1−γ) w` and
/// `α_i⁺ = w⁺ − (1−γ)(w − α_i)` for `i ∈ B`.
pub fn snm_relaxed_step<L: SmoothLoss>(
    state: &SnmState,
    losses: &[L],
    subset: &[usize],
    gamma: f64,
) -> Result<SnmState> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::BadParameter(format!("relaxation {gamma} must lie in (0, 1]")));
    }
    let n = losses.len();
    if state.alphas.len() != n {
        return Err(Error::DimensionMismatch {
            expected: state.alphas.len(),
            got: n,
        });
    }
    if subset.is_empty() || subset.windows(2).any(|w| w[0] >= w[1]) || subset.iter().any(|&i| i >= n) {
        return Err(Error::BadSubset(format!("{subset:?} is not a sorted subset of 0..{n}")));
    }
    let chol = Cholesky::new(state.hess_sum.clone()).ok_or(Error::SingularHessianSum)?;
    let w_hat = chol.solve(&state.vec_sum);
    let w_new = &w_hat * gamma + &state.w * (1.0 - gamma);
    let nf = n as f64;

    let mut next = state.clone();
    for &i in subset {
        let shift = (&state.w - &state.alphas[i]) * (1.0 - gamma);
        let alpha = &w_new - shift;
        let (h_old, v_old) = &state.terms[i];
        let (h_new, v_new) = snm_term(&losses[i], &alpha);
        next.hess_sum += (&h_new - h_old) / nf;
        next.vec_sum += (&v_new - v_old) / nf;
        next.terms[i] = (h_new, v_new);
        next.alphas[i] = alpha;
    }
    next.w = w_new;
    next.steps_since_refresh += 1;
    if next.steps_since_refresh >= n {
        next.refresh(losses);
    }
    Ok(next)
}

/// Randomized subspace Newton: `x − (1/L̂) S (Sᵀ∇²P(x)S)† Sᵀ∇P(x)`.
pub fn rsn_step<P: SmoothLoss>(objective: &P, x: &Vector, s_hat: &DenseMatrix, l_hat: f64) -> Result<Vector> {
    if !(l_hat > 0.0 && l_hat.is_finite()) {
        return Err(Error::BadParameter(format!("relative smoothness {l_hat} must be positive")));
    }
    if s_hat.nrows() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: s_hat.nrows(),
        });
    }
    let g = objective.gradient(x);
    let h = objective.hessian(x);
    let m = s_hat.tr_mul(&(h * s_hat));
    let m = (&m + m.transpose()) * 0.5;
    let coef = solve_least_norm_psd(&m, &s_hat.tr_mul(&g), DEFAULT_REL_TOL)?;
    Ok(x - s_hat * coef / l_hat)
}

/// Default Hessian sketch for randomized subspace Newton: Gaussian `p × τ`.
pub fn rsn_gaussian_sketch(p: usize, tau: usize, rng: &mut SolverRng) -> Result<DenseMatrix> {
    if tau == 0 {
        return Err(Error::InvalidTau { tau, m: p });
    }
    let normal = Normal::new(0.0, 1.0 / (tau as f64).sqrt()).map_err(|e| Error::BadParameter(e.to_string()))?;
    Ok(DenseMatrix::from_fn(p, tau, |_, _| normal.sample(rng)))
}
