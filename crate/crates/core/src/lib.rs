//! Columns-selected matrix completion.
//!
//! The crate is organised around [`MaskedMatrix`], a dense value store paired
//! with the set of observed cells. Solvers consume a masked matrix and return
//! a [`CompletionResult`]; the two-stage pipeline in [`csmc`] completes a
//! uniformly sampled column submatrix first and then reconstructs every
//! column by masked least squares against it.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csmc;
pub mod datasets;
pub mod diagnostics;
mod error;
pub mod io;
pub mod matrix;
pub mod metrics;
pub mod sampling;
pub mod solvers;

pub use crate::csmc::{csmc_complete, stage2_solve, CsmcReport, StageOneSolver, StageTwoSolution};
pub use crate::error::{Error, Result};
pub use crate::matrix::{
    masked_least_squares, project_observed, svt, DenseMatrix, MaskedMatrix, ObservationSet,
    SvdFactors,
};
pub use crate::sampling::{ColumnSelection, Rng};
pub use crate::solvers::{
    mf_als_complete, nn_complete, pgd_complete, CompletionResult, ContinuationConfig,
    ConvergenceTrace, SolverConfig, SolverStatus,
};
