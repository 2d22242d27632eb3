//! Sketch distributions and their sampled realizations `S ∈ ℝ^{m×τ}`.
//!
//! Index-type realizations are never densified in the solver path; their
//! products with `DF(x)` go through the system's column oracle.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Vector};
use crate::problems::NonlinearSystem;
use crate::rng::SolverRng;

#[derive(Debug, Clone, PartialEq)]
pub enum SketchDistribution {
    /// `S = I_m`.
    Identity,
    /// `S = e_i` with probability `p_i`; uniform when `weights` is `None`.
    SingleRow { weights: Option<Vec<f64>> },
    /// Columns of `I_m` indexed by a uniform `τ`-subset.
    UniformSubsample { tau: usize },
    /// I.i.d. `N(0, 1/τ)` entries.
    Gaussian { tau: usize },
    /// Rows grouped in consecutive blocks of `block_size`; a uniform subset
    /// of `tau` blocks is selected.
    Block { block_size: usize, tau: usize },
    /// Bernoulli(`b`) choice between a `τ_n`-subset of the `n` nonlinear rows
    /// and a `τ_d`-subset of the `d` linear rows of a GLM primal-dual system.
    TossingCoin {
        b: f64,
        tau_d: usize,
        tau_n: usize,
        d: usize,
        n: usize,
    },
    /// Variable-splitting sketch built from the current per-loss Hessians and
    /// a uniform `τ`-subset of the losses.
    SnmStructured { tau: usize },
    /// `S = DF(x)ᵀ Ŝ` with `Ŝ` drawn from `base` (on `p` rows).
    Adapted { base: Box<SketchDistribution> },
}

/// Everything a state-dependent distribution may look at.
#[derive(Clone, Copy)]
pub struct SketchContext<'a> {
    pub system: &'a dyn NonlinearSystem,
    pub x: &'a Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SketchKind {
    Identity,
    /// Sorted, distinct row indices.
    ColumnIndices(Vec<usize>),
    DenseBlock(DenseMatrix),
    /// Sorted subset `B_d` of the linear rows `0..d`.
    CoinLinear(Vec<usize>),
    /// Sorted subset `B_n` of samples; selects rows `offset + i`.
    CoinNonlinear { samples: Vec<usize>, offset: usize },
    /// `[[I_d, 0], [stacked ∇²φ_i(α_i)/n, I_{B_n}]]`.
    SnmBlock {
        d: usize,
        scaled_hessians: Vec<DenseMatrix>,
        subset: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchRealization {
    m: usize,
    kind: SketchKind,
}

fn check_subset(subset: &[usize], bound: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::BadSubset("subset is empty".into()));
    }
    if subset.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadSubset("indices must be sorted and distinct".into()));
    }
    if let Some(&last) = subset.last() {
        if last >= bound {
            return Err(Error::BadSubset(format!("index {last} out of range 0..{bound}")));
        }
    }
    Ok(())
}

/// Uniform `tau`-subset of `0..m` by Floyd's algorithm, returned sorted.
pub fn sample_subset(m: usize, tau: usize, rng: &mut SolverRng) -> Result<Vec<usize>> {
    if tau == 0 || tau > m {
        return Err(Error::InvalidTau { tau, m });
    }
    let mut chosen = HashSet::with_capacity(tau);
    for j in (m - tau)..m {
        let t = rng.random_range(0..=j);
        if !chosen.insert(t) {
            chosen.insert(j);
        }
    }
    let mut out: Vec<usize> = chosen.into_iter().collect();
    out.sort_unstable();
    Ok(out)
}

impl SketchRealization {
    pub fn identity(m: usize) -> Self {
        Self {
            m,
            kind: SketchKind::Identity,
        }
    }

    pub fn columns(m: usize, rows: Vec<usize>) -> Result<Self> {
        check_subset(&rows, m)?;
        Ok(Self {
            m,
            kind: SketchKind::ColumnIndices(rows),
        })
    }

    pub fn dense(s: DenseMatrix) -> Result<Self> {
        crate::linalg::ensure_finite_mat(&s, "sketch")?;
        if s.ncols() == 0 {
            return Err(Error::InvalidTau { tau: 0, m: s.nrows() });
        }
        Ok(Self {
            m: s.nrows(),
            kind: SketchKind::DenseBlock(s),
        })
    }

    /// Linear-block sketch of a GLM system with `d` features and `n` samples.
    pub fn coin_linear(d: usize, n: usize, rows: Vec<usize>) -> Result<Self> {
        check_subset(&rows, d)?;
        Ok(Self {
            m: d + n,
            kind: SketchKind::CoinLinear(rows),
        })
    }

    /// Nonlinear-block sketch of a GLM system with `d` features and `n` samples.
    pub fn coin_nonlinear(d: usize, n: usize, samples: Vec<usize>) -> Result<Self> {
        check_subset(&samples, n)?;
        Ok(Self {
            m: d + n,
            kind: SketchKind::CoinNonlinear { samples, offset: d },
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> usize {
        match &self.kind {
            SketchKind::Identity => self.m,
            SketchKind::ColumnIndices(r) | SketchKind::CoinLinear(r) => r.len(),
            SketchKind::DenseBlock(s) => s.ncols(),
            SketchKind::CoinNonlinear { samples, .. } => samples.len(),
            SketchKind::SnmBlock { d, subset, .. } => (subset.len() + 1) * d,
        }
    }

    pub fn kind(&self) -> &SketchKind {
        &self.kind
    }

    /// Rows selected by an index-type sketch, in column order.
    pub fn selected_rows(&self) -> Option<Vec<usize>> {
        match &self.kind {
            SketchKind::Identity => Some((0..self.m).collect()),
            SketchKind::ColumnIndices(r) | SketchKind::CoinLinear(r) => Some(r.clone()),
            SketchKind::CoinNonlinear { samples, offset } => {
                Some(samples.iter().map(|i| offset + i).collect())
            }
            _ => None,
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: len,
            });
        }
        Ok(())
    }

    /// `Sᵀ v`.
    pub fn transpose_apply(&self, v: &Vector) -> Result<Vector> {
        self.check_len(v.len())?;
        Ok(match &self.kind {
            SketchKind::DenseBlock(s) => s.tr_mul(v),
            SketchKind::SnmBlock {
                d,
                scaled_hessians,
                subset,
            } => {
                let d = *d;
                let mut out = Vector::zeros(self.tau());
                let mut top = v.rows(0, d).into_owned();
                for (i, h) in scaled_hessians.iter().enumerate() {
                    top += h.tr_mul(&v.rows((i + 1) * d, d));
                }
                out.rows_mut(0, d).copy_from(&top);
                for (k, &i) in subset.iter().enumerate() {
                    out.rows_mut((k + 1) * d, d).copy_from(&v.rows((i + 1) * d, d));
                }
                out
            }
            _ => {
                let rows = self.selected_rows().expect("index sketch");
                Vector::from_iterator(rows.len(), rows.iter().map(|&r| v[r]))
            }
        })
    }

    /// `S u` for `u ∈ ℝ^τ`.
    pub fn apply(&self, u: &Vector) -> Result<Vector> {
        if u.len() != self.tau() {
            return Err(Error::DimensionMismatch {
                expected: self.tau(),
                got: u.len(),
            });
        }
        Ok(match &self.kind {
            SketchKind::DenseBlock(s) => s * u,
            SketchKind::SnmBlock {
                d,
                scaled_hessians,
                subset,
            } => {
                let d = *d;
                let mut out = Vector::zeros(self.m);
                let u0 = u.rows(0, d);
                out.rows_mut(0, d).copy_from(&u0);
                for (i, h) in scaled_hessians.iter().enumerate() {
                    out.rows_mut((i + 1) * d, d).copy_from(&(h * u0));
                }
                for (k, &i) in subset.iter().enumerate() {
                    let mut blk = out.rows_mut((i + 1) * d, d);
                    blk += u.rows((k + 1) * d, d);
                }
                out
            }
            _ => {
                let mut out = Vector::zeros(self.m);
                for (k, r) in self.selected_rows().expect("index sketch").into_iter().enumerate() {
                    out[r] += u[k];
                }
                out
            }
        })
    }

    /// Dense `m × τ` matrix; meant for tests and small diagnostics.
    pub fn to_dense(&self) -> DenseMatrix {
        let tau = self.tau();
        let mut s = DenseMatrix::zeros(self.m, tau);
        for k in 0..tau {
            let mut e = Vector::zeros(tau);
            e[k] = 1.0;
            s.set_column(k, &self.apply(&e).expect("unit vector has length tau"));
        }
        s
    }

    /// `DF(x) · S`, of shape `p × τ`.
    pub fn jacobian_product(&self, sys: &dyn NonlinearSystem, x: &Vector) -> Result<DenseMatrix> {
        self.check_len(sys.output_dim())?;
        if x.len() != sys.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: sys.input_dim(),
                got: x.len(),
            });
        }
        Ok(match &self.kind {
            SketchKind::Identity => crate::problems::df_dense(sys, x),
            SketchKind::DenseBlock(s) => sys.df_times(x, s),
            SketchKind::SnmBlock {
                d,
                scaled_hessians,
                subset,
            } => {
                let d = *d;
                let mut s1 = DenseMatrix::zeros(self.m, d);
                s1.view_mut((0, 0), (d, d)).fill_with_identity();
                for (i, h) in scaled_hessians.iter().enumerate() {
                    s1.view_mut(((i + 1) * d, 0), (d, d)).copy_from(h);
                }
                let rows: Vec<usize> = subset
                    .iter()
                    .flat_map(|&i| ((i + 1) * d)..((i + 2) * d))
                    .collect();
                let left = sys.df_times(x, &s1);
                let right = sys.df_columns(x, &rows);
                let mut out = DenseMatrix::zeros(sys.input_dim(), self.tau());
                out.view_mut((0, 0), (left.nrows(), d)).copy_from(&left);
                out.view_mut((0, d), (right.nrows(), rows.len())).copy_from(&right);
                out
            }
            _ => sys.df_columns(x, &self.selected_rows().expect("index sketch")),
        })
    }
}

/// Variable-splitting sketch for `n = scaled_hessians.len()` losses of
/// dimension `d` and the loss subset `subset`.
pub fn snm_sketch(d: usize, scaled_hessians: Vec<DenseMatrix>, subset: Vec<usize>) -> Result<SketchRealization> {
    let n = scaled_hessians.len();
    check_subset(&subset, n)?;
    if d == 0 || scaled_hessians.iter().any(|h| h.nrows() != d || h.ncols() != d) {
        return Err(Error::BadSubset(format!("Hessian blocks must be {d}x{d}")));
    }
    for h in &scaled_hessians {
        crate::linalg::ensure_finite_mat(h, "Hessian block")?;
    }
    Ok(SketchRealization {
        m: (n + 1) * d,
        kind: SketchKind::SnmBlock {
            d,
            scaled_hessians,
            subset,
        },
    })
}

impl SketchDistribution {
    /// Checks the parameters against a system with `m` equations.
    pub fn validate(&self, m: usize) -> Result<()> {
        let check_tau = |tau: usize, bound: usize| {
            if tau == 0 || tau > bound {
                Err(Error::InvalidTau { tau, m: bound })
            } else {
                Ok(())
            }
        };
        match self {
            SketchDistribution::Identity => Ok(()),
            SketchDistribution::SingleRow { weights } => match weights {
                None if m == 0 => Err(Error::EmptyDistribution("no rows".into())),
                None => Ok(()),
                Some(w) => {
                    if w.len() != m {
                        return Err(Error::DimensionMismatch {
                            expected: m,
                            got: w.len(),
                        });
                    }
                    if w.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                        return Err(Error::EmptyDistribution("weights must be nonnegative".into()));
                    }
                    let total: f64 = w.iter().sum();
                    if (total - 1.0).abs() > 1e-10 {
                        return Err(Error::EmptyDistribution(format!("weights sum to {total}")));
                    }
                    Ok(())
                }
            },
            SketchDistribution::UniformSubsample { tau } => check_tau(*tau, m),
            SketchDistribution::Gaussian { tau } => {
                if *tau == 0 {
                    Err(Error::InvalidTau { tau: 0, m })
                } else {
                    Ok(())
                }
            }
            SketchDistribution::Block { block_size, tau } => {
                if *block_size == 0 || !m.is_multiple_of(*block_size) {
                    return Err(Error::BadParameter(format!(
                        "block size {block_size} does not divide {m}"
                    )));
                }
                check_tau(*tau, m / block_size)
            }
            SketchDistribution::TossingCoin {
                b,
                tau_d,
                tau_n,
                d,
                n,
            } => {
                if !(*b > 0.0 && *b < 1.0) {
                    return Err(Error::BadParameter(format!("coin probability {b} must lie in (0, 1)")));
                }
                if d + n != m {
                    return Err(Error::DimensionMismatch {
                        expected: m,
                        got: d + n,
                    });
                }
                check_tau(*tau_d, *d)?;
                check_tau(*tau_n, *n)
            }
            SketchDistribution::SnmStructured { tau } => {
                if *tau == 0 {
                    Err(Error::InvalidTau { tau: 0, m })
                } else {
                    Ok(())
                }
            }
            SketchDistribution::Adapted { base } => match base.as_ref() {
                SketchDistribution::Adapted { .. } | SketchDistribution::SnmStructured { .. } => Err(
                    Error::BadParameter("adapted sketches need a state-free base".into()),
                ),
                _ => Ok(()),
            },
        }
    }

    /// Draws one realization for a system with `m` equations.
    pub fn sample(
        &self,
        m: usize,
        ctx: Option<SketchContext<'_>>,
        rng: &mut SolverRng,
    ) -> Result<SketchRealization> {
        self.validate(m)?;
        match self {
            SketchDistribution::Identity => Ok(SketchRealization::identity(m)),
            SketchDistribution::SingleRow { weights } => {
                let i = match weights {
                    None => rng.random_range(0..m),
                    Some(w) => {
                        let u: f64 = rng.random();
                        let mut acc = 0.0;
                        let mut pick = None;
                        for (i, &p) in w.iter().enumerate() {
                            acc += p;
                            if p > 0.0 && u < acc {
                                pick = Some(i);
                                break;
                            }
                        }
                        // Rounding can leave u ≥ acc; fall back to the last row with mass.
                        pick.or_else(|| w.iter().rposition(|&p| p > 0.0))
                            .ok_or_else(|| Error::EmptyDistribution("all weights are zero".into()))?
                    }
                };
                SketchRealization::columns(m, vec![i])
            }
            SketchDistribution::UniformSubsample { tau } => {
                SketchRealization::columns(m, sample_subset(m, *tau, rng)?)
            }
            SketchDistribution::Gaussian { tau } => {
                let normal = Normal::new(0.0, 1.0 / (*tau as f64).sqrt())
                    .map_err(|e| Error::BadParameter(e.to_string()))?;
                let s = DenseMatrix::from_fn(m, *tau, |_, _| normal.sample(rng));
                SketchRealization::dense(s)
            }
            SketchDistribution::Block { block_size, tau } => {
                let blocks = sample_subset(m / block_size, *tau, rng)?;
                let rows = blocks
                    .iter()
                    .flat_map(|&b| (b * block_size)..((b + 1) * block_size))
                    .collect();
                SketchRealization::columns(m, rows)
            }
            SketchDistribution::TossingCoin {
                b,
                tau_d,
                tau_n,
                d,
                n,
            } => {
                let nonlinear = rng.random::<f64>() < *b;
                if nonlinear {
                    SketchRealization::coin_nonlinear(*d, *n, sample_subset(*n, *tau_n, rng)?)
                } else {
                    SketchRealization::coin_linear(*d, *n, sample_subset(*d, *tau_d, rng)?)
                }
            }
            SketchDistribution::SnmStructured { tau } => {
                let ctx = ctx.ok_or(Error::MissingContext)?;
                let curv = ctx
                    .system
                    .split_curvature(ctx.x)
                    .ok_or_else(|| Error::BadParameter("system has no splitting structure".into()))?;
                let n = curv.scaled_hessians.len();
                let subset = sample_subset(n, *tau, rng)?;
                snm_sketch(curv.d, curv.scaled_hessians, subset)
            }
            SketchDistribution::Adapted { base } => {
                let ctx = ctx.ok_or(Error::MissingContext)?;
                let p = ctx.system.input_dim();
                let s_hat = base.sample(p, None, rng)?.to_dense();
                SketchRealization::dense(ctx.system.df_t_times(ctx.x, &s_hat))
            }
        }
    }
}

/// Monte Carlo average of `S Sᵀ` over `samples` draws.
pub fn estimate_e_sst(
    dist: &SketchDistribution,
    m: usize,
    ctx: Option<SketchContext<'_>>,
    samples: usize,
    rng: &mut SolverRng,
) -> Result<DenseMatrix> {
    if samples == 0 {
        return Err(Error::BadParameter("at least one sample is required".into()));
    }
    let mut acc = DenseMatrix::zeros(m, m);
    for _ in 0..samples {
        let s = dist.sample(m, ctx, rng)?;
        match s.selected_rows() {
            Some(rows) => {
                for r in rows {
                    acc[(r, r)] += 1.0;
                }
            }
            None => {
                let sd = s.to_dense();
                acc += &sd * sd.transpose();
            }
        }
    }
    Ok(acc / samples as f64)
}
