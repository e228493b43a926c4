//! Deterministic numeric kernel: SPD factorization and rank-one maintenance,
//! multivariate normal sampling from a precision factor, PCA, and the paired
//! t-test.
//!
//! Everything here is a pure function of its inputs; randomness enters only
//! through explicit standard-normal sources supplied by the caller.

mod chol;
mod pca;
mod ttest;

pub use chol::{cholesky_factor, mvn_sample, TriFactor};
pub use pca::{pca_fit, pca_project, PcaModel};
pub use ttest::{paired_t_test, TTestResult};

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not symmetric: |M[{row},{col}] - M[{col},{row}]| = {delta:e}")]
    NotSymmetric { row: usize, col: usize, delta: f64 },

    #[error("matrix is not positive definite: pivot {pivot:e} at column {column}")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("not enough data rows: need at least 2, got {0}")]
    EmptyData(usize),

    #[error("component count {k} out of range 1..={max}")]
    BadK { k: usize, max: usize },

    #[error("series lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least two paired samples, got {0}")]
    TooFewSamples(usize),
}
