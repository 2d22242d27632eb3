//! Regularized logistic regression `P(w) = (1/n)∑ φ_i(a_iᵀw) + (λ/2)‖w‖²`
//! and its primal-dual root-finding form.

use super::NonlinearSystem;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossFamily {
    #[default]
    Logistic,
}

/// Binary classification data: `A` is `d × n` with one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmDataset {
    a: SparseMatrix,
    y: Vec<f64>,
    lambda: f64,
    loss: LossFamily,
}

impl GlmDataset {
    pub fn new(a: SparseMatrix, y: Vec<f64>, lambda: f64) -> Result<Self> {
        if y.len() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.ncols(),
                got: y.len(),
            });
        }
        if let Some(bad) = y.iter().find(|&&v| v != 1.0 && v != -1.0) {
            return Err(Error::BadParameter(format!("label {bad} is not ±1")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::BadParameter(format!("lambda must be positive, got {lambda}")));
        }
        Ok(Self {
            a,
            y,
            lambda,
            loss: LossFamily::Logistic,
        })
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::BadParameter(format!("lambda must be positive, got {lambda}")));
        }
        self.lambda = lambda;
        Ok(self)
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    /// Number of features.
    pub fn d(&self) -> usize {
        self.a.nrows()
    }

    pub fn features(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn labels(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn loss(&self) -> LossFamily {
        self.loss
    }

    /// Samples whose feature vector is identically zero.
    pub fn zero_columns(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.a.col_norm_sq(i) == 0.0).collect()
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.n() == 0 || self.d() == 0 {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }

    fn check_w(&self, w: &Vector) -> Result<()> {
        if w.len() != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                got: w.len(),
            });
        }
        Ok(())
    }

    /// `(φ_i, φ′_i, φ″_i)` evaluated at `a_iᵀw`.
    pub fn sample_derivs(&self, i: usize, w: &Vector) -> (f64, f64, f64) {
        glm_phi_derivs(self.a.col_dot(i, w), self.y[i])
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Logistic loss `φ(t) = ln(1 + e^{−yt})` with its first two derivatives,
/// evaluated without overflow.
pub fn glm_phi_derivs(t: f64, y: f64) -> (f64, f64, f64) {
    let z = -y * t;
    let phi = z.max(0.0) + (-z.abs()).exp().ln_1p();
    let s = sigmoid(z);
    let dphi = -y * s;
    let ddphi = s * sigmoid(-z);
    (phi, dphi, ddphi)
}

/// Gradient `∇P(w) = (1/n)∑ φ′_i(a_iᵀw) a_i + λw`.
pub fn glm_grad_p(w: &Vector, ds: &GlmDataset) -> Result<Vector> {
    ds.check_w(w)?;
    ds.ensure_nonempty()?;
    let n = ds.n() as f64;
    let mut g = w * ds.lambda;
    for i in 0..ds.n() {
        let (_, dphi, _) = ds.sample_derivs(i, w);
        ds.a.col_axpy(i, dphi / n, &mut g);
    }
    Ok(g)
}

pub fn glm_objective(w: &Vector, ds: &GlmDataset) -> Result<f64> {
    ds.check_w(w)?;
    ds.ensure_nonempty()?;
    let n = ds.n() as f64;
    let loss: f64 = (0..ds.n()).map(|i| ds.sample_derivs(i, w).0).sum();
    Ok(loss / n + 0.5 * ds.lambda * w.norm_squared())
}

/// Primal-dual system on `x = [α; w]`:
/// `F(α; w) = [Aα/(λn) − w ; α + Φ(w)]` with `Φ_i(w) = φ′_i(a_iᵀw)`.
///
/// The first `d` equations are linear, the last `n` are nonlinear.
#[derive(Debug, Clone, Copy)]
pub struct GlmSystem<'a> {
    ds: &'a GlmDataset,
}

pub fn glm_system(ds: &GlmDataset) -> GlmSystem<'_> {
    GlmSystem { ds }
}

impl<'a> GlmSystem<'a> {
    pub fn dataset(&self) -> &'a GlmDataset {
        self.ds
    }

    fn split<'v>(&self, x: &'v Vector) -> (nalgebra::DVectorView<'v, f64>, Vector) {
        let n = self.ds.n();
        (x.rows(0, n), x.rows(n, self.ds.d()).into_owned())
    }

    fn scale(&self) -> f64 {
        self.ds.lambda * self.ds.n() as f64
    }
}

impl NonlinearSystem for GlmSystem<'_> {
    fn input_dim(&self) -> usize {
        self.ds.n() + self.ds.d()
    }

    fn output_dim(&self) -> usize {
        self.ds.n() + self.ds.d()
    }

    fn eval(&self, x: &Vector) -> Vector {
        let (n, d) = (self.ds.n(), self.ds.d());
        let (alpha, w) = self.split(x);
        let alpha = alpha.into_owned();
        let abar = self.ds.a.mul_vec_by_cols(&alpha) / self.scale();
        let mut f = Vector::zeros(n + d);
        f.rows_mut(0, d).copy_from(&(abar - &w));
        for i in 0..n {
            f[d + i] = alpha[i] + self.ds.sample_derivs(i, &w).1;
        }
        f
    }

    fn eval_component(&self, x: &Vector, r: usize) -> f64 {
        let (n, d) = (self.ds.n(), self.ds.d());
        if r < d {
            let (cols, vals) = self.ds.a.row(r);
            let s: f64 = cols.iter().zip(vals).map(|(&c, &a)| a * x[c]).sum();
            s / self.scale() - x[n + r]
        } else {
            let i = r - d;
            let w = x.rows(n, d).into_owned();
            x[i] + self.ds.sample_derivs(i, &w).1
        }
    }

    fn df_times(&self, x: &Vector, v: &DenseMatrix) -> DenseMatrix {
        let (n, d) = (self.ds.n(), self.ds.d());
        let (_, w) = self.split(x);
        let curv: Vec<f64> = (0..n).map(|i| self.ds.sample_derivs(i, &w).2).collect();
        let s = self.scale();
        let mut out = DenseMatrix::zeros(n + d, v.ncols());
        for k in 0..v.ncols() {
            let vl: Vector = v.view((0, k), (d, 1)).column(0).into_owned();
            let vn = v.view((d, k), (n, 1));
            let mut col_alpha = self.ds.a.tr_mul_vec(&vl) / s;
            col_alpha += vn;
            let mut col_w = -vl;
            for i in 0..n {
                let c = curv[i] * v[(d + i, k)];
                if c != 0.0 {
                    self.ds.a.col_axpy(i, c, &mut col_w);
                }
            }
            out.view_mut((0, k), (n, 1)).copy_from(&col_alpha);
            out.view_mut((n, k), (d, 1)).copy_from(&col_w);
        }
        out
    }

    fn df_t_times(&self, x: &Vector, u: &DenseMatrix) -> DenseMatrix {
        let (n, d) = (self.ds.n(), self.ds.d());
        let (_, w) = self.split(x);
        let s = self.scale();
        let mut out = DenseMatrix::zeros(n + d, u.ncols());
        for k in 0..u.ncols() {
            let ua = u.view((0, k), (n, 1)).column(0).into_owned();
            let uw = u.view((n, k), (d, 1)).column(0).into_owned();
            let lin = self.ds.a.mul_vec_by_cols(&ua) / s - &uw;
            out.view_mut((0, k), (d, 1)).copy_from(&lin);
            for i in 0..n {
                let curv = self.ds.sample_derivs(i, &w).2;
                out[(d + i, k)] = ua[i] + curv * self.ds.a.col_dot(i, &uw);
            }
        }
        out
    }

    fn df_columns(&self, x: &Vector, rows: &[usize]) -> DenseMatrix {
        let (n, d) = (self.ds.n(), self.ds.d());
        let s = self.scale();
        let mut out = DenseMatrix::zeros(n + d, rows.len());
        let w = x.rows(n, d).into_owned();
        for (k, &r) in rows.iter().enumerate() {
            if r < d {
                let (cols, vals) = self.ds.a.row(r);
                for (&c, &a) in cols.iter().zip(vals) {
                    out[(c, k)] = a / s;
                }
                out[(n + r, k)] = -1.0;
            } else {
                let i = r - d;
                out[(i, k)] = 1.0;
                let curv = self.ds.sample_derivs(i, &w).2;
                let (frows, vals) = self.ds.a.col(i);
                for (&j, &a) in frows.iter().zip(vals) {
                    out[(n + j, k)] = curv * a;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_sample() -> GlmDataset {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
        GlmDataset::new(a, vec![1.0], 1.0).unwrap()
    }

    #[test]
    fn phi_closed_forms_at_zero() {
        let (p, d1, d2) = glm_phi_derivs(0.0, 1.0);
        assert!((p - 2f64.ln()).abs() < 1e-16);
        assert_eq!(d1, -0.5);
        assert_eq!(d2, 0.25);
        let (p, d1, d2) = glm_phi_derivs(0.0, -1.0);
        assert!((p - 2f64.ln()).abs() < 1e-16);
        assert_eq!(d1, 0.5);
        assert_eq!(d2, 0.25);
    }

    #[test]
    fn phi_saturates_without_overflow() {
        for &t in &[50.0, 800.0, -800.0, 1e300, -1e300] {
            let (p, d1, d2) = glm_phi_derivs(t, 1.0);
            assert!(p.is_finite() && d1.is_finite() && d2.is_finite(), "t = {t}");
        }
        let (p, d1, d2) = glm_phi_derivs(50.0, 1.0);
        // e^{-50} ≈ 1.93e-22 for all three quantities.
        let e = (-50f64).exp();
        assert!((p - e).abs() < 1e-30);
        assert!((d1 + e).abs() < 1e-30);
        assert!((d2 - e).abs() < 1e-30);
        let (p, _, _) = glm_phi_derivs(-800.0, 1.0);
        assert_eq!(p, 800.0);
    }

    #[test]
    fn gradient_single_sample() {
        let ds = one_sample();
        let g = glm_grad_p(&Vector::zeros(1), &ds).unwrap();
        assert_eq!(g[0], -0.5);
        assert!(matches!(
            glm_grad_p(&Vector::zeros(2), &ds),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn system_hand_evaluation() {
        let ds = one_sample();
        let f = glm_system(&ds).eval(&Vector::zeros(2));
        assert_eq!(f.as_slice(), &[0.0, -0.5]);
    }

    #[test]
    fn rejects_bad_labels_and_lambda() {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]).unwrap();
        assert!(GlmDataset::new(a.clone(), vec![0.0], 1.0).is_err());
        assert!(GlmDataset::new(a, vec![1.0], 0.0).is_err());
    }
}
