//! Nonlinear systems `F(x) = 0` handled by the solvers.
//!
//! Throughout, `DF(x)` is the `p × m` matrix whose columns are the gradients
//! `∇F_i(x)`, i.e. the transpose of the Jacobian.

mod glm;
mod snm;

pub use glm::{
    glm_grad_p, glm_objective, glm_phi_derivs, glm_system, GlmDataset, GlmSystem, LossFamily,
};
pub use snm::{snm_system, GradientSystem, LogisticLoss, QuadraticLoss, SmoothLoss, SnmSystem};

use crate::linalg::{DenseMatrix, Vector};

/// Per-loss curvature of a variable-splitting system: `∇²φ_i(α_i)/n` for
/// every block, with block size `d`.
#[derive(Debug, Clone)]
pub struct SplitCurvature {
    pub d: usize,
    pub scaled_hessians: Vec<DenseMatrix>,
}

pub trait NonlinearSystem: Send + Sync {
    /// Dimension `p` of the unknown.
    fn input_dim(&self) -> usize;
    /// Number `m` of equations.
    fn output_dim(&self) -> usize;

    fn eval(&self, x: &Vector) -> Vector;

    /// Single component `F_i(x)`.
    fn eval_component(&self, x: &Vector, i: usize) -> f64 {
        self.eval(x)[i]
    }

    /// `DF(x) · V` for `V` of shape `m × τ`; returns `p × τ`.
    fn df_times(&self, x: &Vector, v: &DenseMatrix) -> DenseMatrix;

    /// `DF(x)ᵀ · U` for `U` of shape `p × τ`; returns `m × τ`.
    fn df_t_times(&self, x: &Vector, u: &DenseMatrix) -> DenseMatrix;

    /// Gradients `∇F_i(x)` of the listed rows, as columns of a `p × |rows|` matrix.
    fn df_columns(&self, x: &Vector, rows: &[usize]) -> DenseMatrix {
        let mut v = DenseMatrix::zeros(self.output_dim(), rows.len());
        for (k, &r) in rows.iter().enumerate() {
            v[(r, k)] = 1.0;
        }
        self.df_times(x, &v)
    }

    /// The full `p × m` matrix `DF(x)`, when cheap to form.
    fn df_full(&self, _x: &Vector) -> Option<DenseMatrix> {
        None
    }

    /// Curvature blocks for the variable-splitting sketch; `None` for systems
    /// without that structure.
    fn split_curvature(&self, _x: &Vector) -> Option<SplitCurvature> {
        None
    }
}

/// `DF(x)` as a dense matrix, from `df_full` or `DF(x)·I`.
pub fn df_dense(sys: &dyn NonlinearSystem, x: &Vector) -> DenseMatrix {
    sys.df_full(x).unwrap_or_else(|| {
        let m = sys.output_dim();
        sys.df_times(x, &DenseMatrix::identity(m, m))
    })
}

/// `F(x) = A x − b` with `A` of shape `m × p`, so `DF = Aᵀ`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: DenseMatrix,
    pub b: Vector,
}

impl LinearSystem {
    pub fn new(a: DenseMatrix, b: Vector) -> Self {
        assert_eq!(a.nrows(), b.len(), "A and b must have the same number of rows");
        Self { a, b }
    }
}

impl NonlinearSystem for LinearSystem {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval(&self, x: &Vector) -> Vector {
        &self.a * x - &self.b
    }

    fn eval_component(&self, x: &Vector, i: usize) -> f64 {
        self.a.row(i).transpose().dot(x) - self.b[i]
    }

    fn df_times(&self, _x: &Vector, v: &DenseMatrix) -> DenseMatrix {
        self.a.tr_mul(v)
    }

    fn df_t_times(&self, _x: &Vector, u: &DenseMatrix) -> DenseMatrix {
        &self.a * u
    }

    fn df_columns(&self, _x: &Vector, rows: &[usize]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.a.ncols(), rows.len());
        for (k, &r) in rows.iter().enumerate() {
            out.set_column(k, &self.a.row(r).transpose());
        }
        out
    }

    fn df_full(&self, _x: &Vector) -> Option<DenseMatrix> {
        Some(self.a.transpose())
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A single equation `φ(x) = 0` in one unknown.
pub struct ScalarProblem {
    phi: ScalarFn,
    dphi: ScalarFn,
}

impl ScalarProblem {
    pub fn new(
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dphi: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            phi: Box::new(phi),
            dphi: Box::new(dphi),
        }
    }

    pub fn phi(&self, x: f64) -> f64 {
        (self.phi)(x)
    }

    pub fn dphi(&self, x: f64) -> f64 {
        (self.dphi)(x)
    }
}

impl NonlinearSystem for ScalarProblem {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_element(1, self.phi(x[0]))
    }

    fn df_times(&self, x: &Vector, v: &DenseMatrix) -> DenseMatrix {
        v * self.dphi(x[0])
    }

    fn df_t_times(&self, x: &Vector, u: &DenseMatrix) -> DenseMatrix {
        u * self.dphi(x[0])
    }

    fn df_full(&self, x: &Vector) -> Option<DenseMatrix> {
        Some(DenseMatrix::from_element(1, 1, self.dphi(x[0])))
    }
}

/// Star-convexity of `φ²` along the ray from `x` to `x_star`:
/// `φ(x)(φ(x) + 2φ′(x)(x* − x)) ≤ 1e−12`.
pub fn scalar_star_convexity_check(prob: &ScalarProblem, x: f64, x_star: f64) -> bool {
    let p = prob.phi(x);
    p * (p + 2.0 * prob.dphi(x) * (x_star - x)) <= 1e-12
}
