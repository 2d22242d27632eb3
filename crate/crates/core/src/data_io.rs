//! LibSVM text I/O, the Toeplitz-covariance artificial dataset, and
//! conditioning diagnostics.
//!
//! Grammar accepted by [`parse_libsvm`], one sample per line:
//!
//! ```text
//! line    := label (WS index ':' value)* [WS] ['#' comment]
//! label   := float            (any two distinct values; 0 maps to −1)
//! index   := integer ≥ 1      (strictly increasing within a line)
//! value   := float            (explicit zeros are dropped)
//! ```
//!
//! Blank and comment-only lines are skipped. The feature count is the
//! largest index seen unless given explicitly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Cholesky;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{lambda_max, DenseMatrix, Vector};
use crate::problems::GlmDataset;
use crate::rng::seeded_rng;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LibsvmOptions {
    /// Feature count; inferred from the largest index when `None`.
    pub n_features: Option<usize>,
    /// Regularization; `1/n` when `None`.
    pub lambda: Option<f64>,
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedLine {
        line,
        reason: reason.into(),
    }
}

fn map_labels(raw: &[f64]) -> Result<Vec<f64>> {
    let mut distinct: Vec<f64> = raw.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() > 2 {
        return Err(Error::NonBinaryLabels { count: distinct.len() });
    }
    if distinct.iter().all(|&v| v == 1.0 || v == -1.0) {
        return Ok(raw.to_vec());
    }
    if distinct.iter().all(|&v| v == 0.0 || v == 1.0) {
        return Ok(raw.iter().map(|&v| if v == 0.0 { -1.0 } else { 1.0 }).collect());
    }
    // Two arbitrary classes: smaller → −1, larger → +1.
    let low = distinct[0];
    Ok(raw.iter().map(|&v| if v == low { -1.0 } else { 1.0 }).collect())
}

pub fn parse_libsvm<R: BufRead>(reader: R, opts: LibsvmOptions) -> Result<GlmDataset> {
    let mut triplets = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| malformed(line_no, format!("bad label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(malformed(line_no, "non-finite label"));
        }
        let sample = labels.len();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| malformed(line_no, format!("expected index:value, got {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| malformed(line_no, format!("bad index {idx:?}")))?;
            if idx == 0 {
                return Err(malformed(line_no, "indices are 1-based"));
            }
            if idx <= prev {
                return Err(Error::NonMonotoneIndex { line: line_no });
            }
            prev = idx;
            let val: f64 = val
                .parse()
                .map_err(|_| malformed(line_no, format!("bad value {val:?}")))?;
            if !val.is_finite() {
                return Err(malformed(line_no, "non-finite value"));
            }
            if let Some(d) = opts.n_features {
                if idx > d {
                    return Err(malformed(line_no, format!("index {idx} exceeds feature count {d}")));
                }
            }
            max_index = max_index.max(idx);
            if val != 0.0 {
                triplets.push((idx - 1, sample, val));
            }
        }
        labels.push(label);
    }
    let n = labels.len();
    let d = opts.n_features.unwrap_or(max_index);
    let y = map_labels(&labels)?;
    let a = SparseMatrix::from_triplets(d, n, &triplets)?;
    let lambda = opts.lambda.unwrap_or(if n > 0 { 1.0 / n as f64 } else { 1.0 });
    GlmDataset::new(a, y, lambda)
}

pub fn parse_libsvm_file(path: impl AsRef<Path>, opts: LibsvmOptions) -> Result<GlmDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_libsvm(BufReader::new(file), opts)
}

/// Writes labels as `+1`/`-1` and values in shortest round-trip form.
pub fn write_libsvm<W: Write>(ds: &GlmDataset, mut out: W) -> Result<()> {
    let a = ds.features();
    for (i, &label) in ds.labels().iter().enumerate() {
        out.write_all(if label > 0.0 { b"+1" } else { b"-1" })?;
        let (rows, vals) = a.col(i);
        for (&r, &v) in rows.iter().zip(vals) {
            if v != 0.0 {
                write!(out, " {}:{}", r + 1, v)?;
            }
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_libsvm_file(ds: &GlmDataset, path: impl AsRef<Path>) -> Result<()> {
    write_libsvm(ds, BufWriter::new(File::create(path)?))
}

/// Lower Cholesky factor of `T_ij = c^|i−j|`.
pub fn toeplitz_factor(d: usize, c: f64) -> Result<DenseMatrix> {
    if !(0.0..1.0).contains(&c) {
        return Err(Error::BadParameter(format!("Toeplitz parameter {c} must lie in [0, 1)")));
    }
    let t = DenseMatrix::from_fn(d, d, |i, j| c.powi(i.abs_diff(j) as i32));
    Cholesky::new(t)
        .map(|ch| ch.l())
        .ok_or_else(|| Error::BadParameter(format!("Toeplitz matrix with c = {c} is not positive definite")))
}

/// Ground-truth weights `w_j = (−1)ʲ e^{−j/10}`.
pub fn artificial_truth(d: usize) -> Vector {
    Vector::from_fn(d, |j, _| {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sign * (-(j as f64) / 10.0).exp()
    })
}

/// Samples `a_i = L z_i` with `LLᵀ = T`, labels `sign(a_iᵀw + r_i)` (zero
/// maps to `+1`), and `λ = 1/n`. `c = 0` gives `T = I`.
pub fn gen_artificial(n: usize, d: usize, c: f64, seed: u64) -> Result<GlmDataset> {
    if n == 0 || d == 0 {
        return Err(Error::BadParameter("n and d must be at least 1".into()));
    }
    let l = toeplitz_factor(d, c)?;
    let truth = artificial_truth(d);
    let mut rng = seeded_rng(seed);
    let mut triplets = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let z = Vector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = &l * z;
        let r: f64 = rng.sample(StandardNormal);
        y.push(if a.dot(&truth) + r >= 0.0 { 1.0 } else { -1.0 });
        triplets.extend(a.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(j, &v)| (j, i, v)));
    }
    GlmDataset::new(SparseMatrix::from_triplets(d, n, &triplets)?, y, 1.0 / n as f64)
}

/// Copy of the dataset with every sample scaled to unit norm (zero samples
/// are left as they are).
pub fn normalize_samples(ds: &GlmDataset) -> Result<GlmDataset> {
    let a = ds.features();
    let norms: Vec<f64> = (0..ds.n()).map(|i| a.col_norm_sq(i).sqrt()).collect();
    let triplets: Vec<_> = a
        .triplets()
        .map(|(r, c, v)| (r, c, if norms[c] > 0.0 { v / norms[c] } else { v }))
        .collect();
    GlmDataset::new(
        SparseMatrix::from_triplets(ds.d(), ds.n(), &triplets)?,
        ds.labels().to_vec(),
        ds.lambda(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetReport {
    pub n: usize,
    pub d: usize,
    pub nnz: usize,
    pub density: f64,
    pub lambda_max_aat: f64,
    /// `λ_max(AAᵀ)/(4nλ) + 1`
    pub condition_number: f64,
    /// `λ_max(AAᵀ)/(4n) + λ`
    pub smoothness_l: f64,
}

pub fn dataset_report(ds: &GlmDataset) -> Result<DatasetReport> {
    ds.ensure_nonempty()?;
    let a = ds.features();
    let (n, d) = (ds.n(), ds.d());
    let lmax = if d == 0 {
        0.0
    } else {
        lambda_max(|v| a.mul_vec(&a.tr_mul_vec(v)), d, 1e-7, 200_000, 0)?.value
    };
    let lambda = ds.lambda();
    Ok(DatasetReport {
        n,
        d,
        nnz: a.nnz(),
        density: if n * d == 0 { 0.0 } else { a.nnz() as f64 / (n * d) as f64 },
        lambda_max_aat: lmax,
        condition_number: lmax / (4.0 * n as f64 * lambda) + 1.0,
        smoothness_l: lmax / (4.0 * n as f64) + lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<GlmDataset> {
        parse_libsvm(s.as_bytes(), LibsvmOptions::default())
    }

    #[test]
    fn parses_documented_example() {
        let ds = parse("+1 1:0.5 3:2.0\n-1 2:1.0").unwrap();
        assert_eq!((ds.n(), ds.d()), (2, 3));
        let dense = ds.features().to_dense();
        assert_eq!(dense.column(0).as_slice(), &[0.5, 0.0, 2.0]);
        assert_eq!(dense.column(1).as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(ds.labels(), &[1.0, -1.0]);
    }

    #[test]
    fn empty_input_gives_empty_dataset() {
        let ds = parse("").unwrap();
        assert_eq!(ds.n(), 0);
        assert!(matches!(dataset_report(&ds), Err(Error::EmptyDataset)));
    }

    #[test]
    fn comments_and_label_mapping() {
        let ds = parse("# header\n0 1:1 # trailing\n\n1 2:3\n").unwrap();
        assert_eq!(ds.labels(), &[-1.0, 1.0]);
        let ds = parse("2 1:1\n4 1:1\n2 1:2\n").unwrap();
        assert_eq!(ds.labels(), &[-1.0, 1.0, -1.0]);
        assert_eq!(parse("1 1:1\n2 1:1\n3 1:1\n"), Err(Error::NonBinaryLabels { count: 3 }));
    }

    #[test]
    fn grammar_errors() {
        assert_eq!(parse("+1 2:1 1:1\n"), Err(Error::NonMonotoneIndex { line: 1 }));
        assert_eq!(parse("+1 1:1\n+1 1:1 1:2\n"), Err(Error::NonMonotoneIndex { line: 2 }));
        assert!(matches!(parse("+1 0:1\n"), Err(Error::MalformedLine { line: 1, .. })));
        assert!(matches!(parse("+1 1:1\nx 1:1\n"), Err(Error::MalformedLine { line: 2, .. })));
        assert!(matches!(parse("+1 1=1\n"), Err(Error::MalformedLine { line: 1, .. })));
        assert!(matches!(parse("+1 1:abc\n"), Err(Error::MalformedLine { line: 1, .. })));
    }

    #[test]
    fn writer_examples() {
        let a = SparseMatrix::from_triplets(1, 1, &[(0, 0, 2.0)]).unwrap();
        let ds = GlmDataset::new(a, vec![1.0], 1.0).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "+1 1:2\n");

        let a = SparseMatrix::from_triplets(3, 2, &[(0, 0, 1.5), (2, 1, -0.25)]).unwrap();
        let ds = GlmDataset::new(a, vec![-1.0, 1.0], 1.0).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "-1 1:1.5\n+1 3:-0.25\n");
    }

    #[test]
    fn report_on_identity() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let ds = GlmDataset::new(a, vec![1.0, -1.0], 1.0).unwrap();
        let r = dataset_report(&ds).unwrap();
        assert_eq!(r.lambda_max_aat, 1.0);
        assert_eq!(r.condition_number, 1.125);
        assert_eq!(r.smoothness_l, 1.125);
    }

    #[test]
    fn toeplitz_factor_reproduces_covariance() {
        for &(d, c) in &[(1, 0.9), (5, 0.0), (20, 0.9), (50, 0.5)] {
            let l = toeplitz_factor(d, c).unwrap();
            let t = DenseMatrix::from_fn(d, d, |i, j| c.powi(i.abs_diff(j) as i32));
            assert!((&l * l.transpose() - t).norm() <= 1e-10);
        }
        assert!(toeplitz_factor(3, 1.0).is_err());
        assert!(toeplitz_factor(3, -0.1).is_err());
    }
}
