//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NonSymmetric { asymmetry: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sketch size {tau} is invalid for {m} rows")]
    InvalidTau { tau: usize, m: usize },
    #[error("sketch distribution has no mass: {0}")]
    EmptyDistribution(String),
    #[error("invalid index subset: {0}")]
    BadSubset(String),
    #[error("sketch distribution needs the current iterate and system")]
    MissingContext,
    #[error("weight matrix is not positive definite")]
    SingularW,
    #[error("sketched Newton system is inconsistent (residual {residual:e})")]
    InfeasibleConstraint { residual: f64 },
    #[error("row {row} has a vanishing gradient")]
    DegenerateRow { row: usize },
    #[error("averaged Hessian is not positive definite")]
    SingularHessianSum,
    #[error("line search step fell below {min_step:e}")]
    LineSearchStalled { min_step: f64 },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("dataset has no samples")]
    EmptyDataset,
    #[error("line {line}: malformed entry ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: feature indices must be 1-based and strictly increasing")]
    NonMonotoneIndex { line: usize },
    #[error("labels take {count} distinct values; exactly two classes are supported")]
    NonBinaryLabels { count: usize },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("iteration {iteration}: {source}")]
    Step {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Step {
            iteration,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
