//! Finite-sum objectives `P(w) = (1/n)∑ φ_i(w)` and their variable-splitting
//! root-finding form on `x = [w; α₁; …; αₙ]`.

use super::{NonlinearSystem, SplitCurvature};
use crate::linalg::{DenseMatrix, Vector};

/// A twice-differentiable function with gradient and Hessian oracles.
pub trait SmoothLoss: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, w: &Vector) -> f64;
    fn gradient(&self, w: &Vector) -> Vector;
    fn hessian(&self, w: &Vector) -> DenseMatrix;
}

/// `φ(w) = ½ (w − c)ᵀ H (w − c)`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub h: DenseMatrix,
    pub c: Vector,
}

impl QuadraticLoss {
    pub fn new(h: DenseMatrix, c: Vector) -> Self {
        assert!(h.is_square() && h.nrows() == c.len(), "quadratic dimensions");
        Self { h, c }
    }
}

impl SmoothLoss for QuadraticLoss {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, w: &Vector) -> f64 {
        let r = w - &self.c;
        0.5 * r.dot(&(&self.h * &r))
    }

    fn gradient(&self, w: &Vector) -> Vector {
        &self.h * (w - &self.c)
    }

    fn hessian(&self, _w: &Vector) -> DenseMatrix {
        self.h.clone()
    }
}

/// Single-sample regularized logistic loss `ln(1 + e^{−y aᵀw}) + (λ/2)‖w‖²`.
#[derive(Debug, Clone)]
pub struct LogisticLoss {
    pub a: Vector,
    pub y: f64,
    pub lambda: f64,
}

impl SmoothLoss for LogisticLoss {
    fn dim(&self) -> usize {
        self.a.len()
    }

    fn value(&self, w: &Vector) -> f64 {
        super::glm_phi_derivs(self.a.dot(w), self.y).0 + 0.5 * self.lambda * w.norm_squared()
    }

    fn gradient(&self, w: &Vector) -> Vector {
        let (_, d1, _) = super::glm_phi_derivs(self.a.dot(w), self.y);
        &self.a * d1 + w * self.lambda
    }

    fn hessian(&self, w: &Vector) -> DenseMatrix {
        let (_, _, d2) = super::glm_phi_derivs(self.a.dot(w), self.y);
        &self.a * self.a.transpose() * d2 + DenseMatrix::identity(self.dim(), self.dim()) * self.lambda
    }
}

/// Gradient system `F = ∇P`, whose `DF = ∇²P` is symmetric.
#[derive(Debug, Clone, Copy)]
pub struct GradientSystem<'a, P> {
    pub objective: &'a P,
}

impl<P: SmoothLoss> NonlinearSystem for GradientSystem<'_, P> {
    fn input_dim(&self) -> usize {
        self.objective.dim()
    }

    fn output_dim(&self) -> usize {
        self.objective.dim()
    }

    fn eval(&self, x: &Vector) -> Vector {
        self.objective.gradient(x)
    }

    fn df_times(&self, x: &Vector, v: &DenseMatrix) -> DenseMatrix {
        self.objective.hessian(x) * v
    }

    fn df_t_times(&self, x: &Vector, u: &DenseMatrix) -> DenseMatrix {
        self.objective.hessian(x).tr_mul(u)
    }

    fn df_full(&self, x: &Vector) -> Option<DenseMatrix> {
        Some(self.objective.hessian(x))
    }
}

/// `F(w; α) = [(1/n)∑∇φ_i(α_i) ; w − α₁ ; … ; w − αₙ]`.
#[derive(Debug, Clone, Copy)]
pub struct SnmSystem<'a, L> {
    losses: &'a [L],
    d: usize,
}

pub fn snm_system<L: SmoothLoss>(losses: &[L]) -> SnmSystem<'_, L> {
    assert!(!losses.is_empty(), "at least one loss is required");
    let d = losses[0].dim();
    assert!(losses.iter().all(|l| l.dim() == d), "losses must share a dimension");
    SnmSystem { losses, d }
}

impl<'a, L: SmoothLoss> SnmSystem<'a, L> {
    pub fn n(&self) -> usize {
        self.losses.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn losses(&self) -> &'a [L] {
        self.losses
    }

    /// Stacks `w` and the `α_i` into one point.
    pub fn pack(&self, w: &Vector, alphas: &[Vector]) -> Vector {
        let d = self.d;
        let mut x = Vector::zeros((self.n() + 1) * d);
        x.rows_mut(0, d).copy_from(w);
        for (i, a) in alphas.iter().enumerate() {
            x.rows_mut((i + 1) * d, d).copy_from(a);
        }
        x
    }

    /// Splits a point into `w` and the `α_i`.
    pub fn unpack(&self, x: &Vector) -> (Vector, Vec<Vector>) {
        let d = self.d;
        let w = x.rows(0, d).into_owned();
        let alphas = (0..self.n()).map(|i| x.rows((i + 1) * d, d).into_owned()).collect();
        (w, alphas)
    }

    fn block(&self, x: &Vector, i: usize) -> Vector {
        x.rows((i + 1) * self.d, self.d).into_owned()
    }
}

impl<L: SmoothLoss> NonlinearSystem for SnmSystem<'_, L> {
    fn input_dim(&self) -> usize {
        (self.n() + 1) * self.d
    }

    fn output_dim(&self) -> usize {
        (self.n() + 1) * self.d
    }

    fn eval(&self, x: &Vector) -> Vector {
        let (d, n) = (self.d, self.n());
        let mut f = Vector::zeros((n + 1) * d);
        let w = x.rows(0, d);
        let mut g = Vector::zeros(d);
        for (i, loss) in self.losses.iter().enumerate() {
            let a = self.block(x, i);
            g += loss.gradient(&a);
            f.rows_mut((i + 1) * d, d).copy_from(&(w - &a));
        }
        f.rows_mut(0, d).copy_from(&(g / n as f64));
        f
    }

    fn df_times(&self, x: &Vector, v: &DenseMatrix) -> DenseMatrix {
        let (d, n) = (self.d, self.n());
        let nf = n as f64;
        let v0 = v.rows(0, d);
        let mut out = DenseMatrix::zeros((n + 1) * d, v.ncols());
        for (i, loss) in self.losses.iter().enumerate() {
            let vi = v.rows((i + 1) * d, d);
            let mut top = out.rows_mut(0, d);
            top += &vi;
            let h = loss.hessian(&self.block(x, i));
            let blk = &h * v0 / nf - vi;
            out.rows_mut((i + 1) * d, d).copy_from(&blk);
        }
        out
    }

    fn df_t_times(&self, x: &Vector, u: &DenseMatrix) -> DenseMatrix {
        let (d, n) = (self.d, self.n());
        let nf = n as f64;
        let uw = u.rows(0, d);
        let mut out = DenseMatrix::zeros((n + 1) * d, u.ncols());
        for (i, loss) in self.losses.iter().enumerate() {
            let ui = u.rows((i + 1) * d, d);
            let h = loss.hessian(&self.block(x, i));
            let mut top = out.rows_mut(0, d);
            top += &h * ui / nf;
            out.rows_mut((i + 1) * d, d).copy_from(&(uw - ui));
        }
        out
    }

    fn df_full(&self, x: &Vector) -> Option<DenseMatrix> {
        let (d, n) = (self.d, self.n());
        let nf = n as f64;
        let size = (n + 1) * d;
        let mut df = DenseMatrix::zeros(size, size);
        for (i, loss) in self.losses.iter().enumerate() {
            let off = (i + 1) * d;
            let h = loss.hessian(&self.block(x, i));
            df.view_mut((off, 0), (d, d)).copy_from(&(h / nf));
            for k in 0..d {
                df[(k, off + k)] = 1.0;
                df[(off + k, off + k)] = -1.0;
            }
        }
        Some(df)
    }

    fn split_curvature(&self, x: &Vector) -> Option<SplitCurvature> {
        let nf = self.n() as f64;
        let scaled_hessians = self
            .losses
            .iter()
            .enumerate()
            .map(|(i, l)| l.hessian(&self.block(x, i)) / nf)
            .collect();
        Some(SplitCurvature {
            d: self.d,
            scaled_hessians,
        })
    }
}
