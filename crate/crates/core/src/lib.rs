//! Sketched Newton-Raphson methods for nonlinear equations and empirical
//! risk minimization.
//!
//! The central object is a [`NonlinearSystem`] `F: ℝᵖ → ℝᵐ` together with
//! a [`SketchDistribution`] over `m × τ` matrices. [`run_snr`] drives the
//! generic update; [`tcs`] holds the specialized tossing-coin solver for
//! logistic regression, and [`baselines`] the first-order comparison methods.

pub mod baselines;
pub mod data_io;
pub mod error;
pub mod linalg;
pub mod problems;
pub mod rng;
pub mod sketches;
pub mod snr;
pub mod sparse;
pub mod specialized;
pub mod tcs;
pub mod trace;

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, Vector};
pub use problems::{GlmDataset, NonlinearSystem};
pub use sketches::{SketchDistribution, SketchRealization};
pub use snr::{run_snr, SnrConfig};
pub use sparse::SparseMatrix;
pub use trace::{RunStatus, SolverTrace, TraceRecord};
