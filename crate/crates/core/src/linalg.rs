//! Dense linear-algebra kernels: least-norm solves of small symmetric PSD
//! systems and spectral estimates.
//!
//! Dense matrices are `nalgebra::DMatrix<f64>`, stored column-major.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default eigenvalue truncation threshold, relative to the largest eigenvalue.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// Result of an iterative eigenvalue estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative residual `‖Mv − θv‖ / θ` at the returned Ritz pair.
    pub residual: f64,
}

pub(crate) fn ensure_finite_vec(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_mat(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn max_abs(m: &DenseMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Checks symmetry within `rel_tol` (relative to the largest entry) and
/// returns the symmetrized copy `(M + Mᵀ)/2`.
fn symmetrized(m: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    ensure_finite_mat(m, "matrix")?;
    let n = m.nrows();
    let scale = max_abs(m);
    let tol = rel_tol.max(64.0 * f64::EPSILON) * scale;
    let mut asym = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if asym > tol {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Minimum-norm solution `M†b` of a symmetric PSD system.
///
/// Eigenvalues at or below `rel_tol · λ_max(M)` are treated as zero.
pub fn solve_least_norm_psd(m: &DenseMatrix, b: &Vector, rel_tol: f64) -> Result<Vector> {
    if b.len() != m.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: b.len(),
        });
    }
    ensure_finite_vec(b, "right-hand side")?;
    let sym = symmetrized(m, rel_tol)?;
    let n = sym.nrows();
    if n == 0 {
        return Ok(Vector::zeros(0));
    }
    if n == 1 {
        let a = sym[(0, 0)];
        return Ok(if a > 0.0 {
            Vector::from_element(1, b[0] / a)
        } else {
            Vector::zeros(1)
        });
    }
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l));
    let mut out = Vector::zeros(n);
    if lmax <= 0.0 {
        return Ok(out);
    }
    let cut = rel_tol * lmax;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cut {
            let u = eig.eigenvectors.column(k);
            let coef = u.dot(b) / lam;
            out.axpy(coef, &u, 1.0);
        }
    }
    Ok(out)
}

/// Solves a symmetric positive-definite system by Cholesky, falling back to
/// the least-norm eigen solve when the factorization breaks down.
pub fn solve_spd(m: &DenseMatrix, b: &Vector) -> Result<Vector> {
    ensure_finite_vec(b, "right-hand side")?;
    ensure_finite_mat(m, "matrix")?;
    match Cholesky::new(m.clone()) {
        Some(ch) => Ok(ch.solve(b)),
        None => solve_least_norm_psd(m, b, DEFAULT_REL_TOL),
    }
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration from a
/// seeded random start.
pub fn lambda_max<F>(
    mut apply: F,
    dim: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<SpectralEstimate>
where
    F: FnMut(&Vector) -> Vector,
{
    if dim == 0 {
        return Err(Error::BadParameter("dimension must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Vector::from_fn(dim, |_, _| rng.random_range(0.5..1.5));
    v /= v.norm();
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let w = apply(&v);
        if w.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: w.len(),
            });
        }
        ensure_finite_vec(&w, "operator output")?;
        let wn = w.norm();
        if wn == 0.0 {
            return Ok(SpectralEstimate {
                value: 0.0,
                iterations: it,
                residual: 0.0,
            });
        }
        let theta = v.dot(&w) / v.dot(&v);
        residual = (&w - &v * theta).norm() / theta.abs().max(f64::MIN_POSITIVE);
        if residual <= tol {
            return Ok(SpectralEstimate {
                value: theta.max(0.0),
                iterations: it,
                residual,
            });
        }
        v = w / wn;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Smallest eigenvalue strictly above `rel_tol · λ_max(M)`; zero when `M = 0`.
pub fn lambda_min_nonzero(m: &DenseMatrix, rel_tol: f64) -> Result<f64> {
    let sym = symmetrized(m, rel_tol)?;
    if sym.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = SymmetricEigen::new(sym);
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |acc, &l| acc.max(l));
    if lmax <= 0.0 {
        return Ok(0.0);
    }
    let cut = rel_tol * lmax;
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .filter(|&l| l > cut)
        .fold(f64::INFINITY, f64::min))
}

/// Least-squares solution of minimum norm for a general matrix, via SVD.
///
/// Used by the dense verification routes, which must not share code with the
/// eigen-based solve above.
pub fn lstsq_min_norm(a: &DenseMatrix, b: &Vector, rel_tol: f64) -> Result<Vector> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    ensure_finite_mat(a, "matrix")?;
    ensure_finite_vec(b, "right-hand side")?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vector::zeros(a.ncols()));
    }
    let pinv = pseudo_inverse(a, rel_tol)?;
    Ok(pinv * b)
}

/// Moore-Penrose pseudo-inverse via SVD, dropping singular values below
/// `rel_tol · σ_max`.
pub fn pseudo_inverse(a: &DenseMatrix, rel_tol: f64) -> Result<DenseMatrix> {
    ensure_finite_mat(a, "matrix")?;
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(DenseMatrix::zeros(a.ncols(), a.nrows()));
    }
    let (u, sv, v) = thin_svd(a)?;
    let smax = sv.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    let cut = rel_tol * smax;
    let inv = sv.map(|s| if s > cut && s > 0.0 { 1.0 / s } else { 0.0 });
    Ok(v * DenseMatrix::from_diagonal(&inv) * u.transpose())
}

// faer rather than nalgebra: nalgebra 0.35's SVD returns wrong factors for
// some rank-deficient inputs (σ₁ = 2.40 for a rank-one 2×5 matrix with
// σ₁ = 2.07).
fn thin_svd(a: &DenseMatrix) -> Result<(DenseMatrix, Vector, DenseMatrix)> {
    let m = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    let svd = m
        .thin_svd()
        .map_err(|e| Error::BadParameter(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let k = s.nrows();
    Ok((
        DenseMatrix::from_fn(u.nrows(), k, |i, j| u[(i, j)]),
        Vector::from_fn(k, |i, _| s[i]),
        DenseMatrix::from_fn(v.nrows(), k, |i, j| v[(i, j)]),
    ))
}

/// Spectral norm of a dense matrix.
pub fn spectral_norm(a: &DenseMatrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
        .singular_values()
        .map(|sv| sv.into_iter().fold(0.0_f64, f64::max))
        .unwrap_or(f64::NAN)
}
