//! Nuclear-norm completion solvers and the matrix-factorization baseline.
//!
//! * [`pgd_complete`] runs proximal gradient on
//!   `1/2 ||R(X) - R(M)||_F^2 + lambda ||X||_*`.
//! * [`nn_complete`] approximates the equality-constrained nuclear-norm
//!   problem by running the same iteration over a decreasing schedule of
//!   `lambda` with warm starts until the observed entries are matched.
//! * [`mf_als_complete`] fits `L R^T` by alternating ridge regressions.

mod mf;
mod nn;
mod pgd;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskedMatrix};

pub use mf::mf_als_complete;
pub use nn::{nn_complete, nn_complete_schedule};
pub use pgd::{pgd_complete, pgd_complete_from};

/// Regularization weight, either absolute or as a multiple of
/// `||R(M)||_2` (the smallest weight for which `X = 0` is optimal).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    Absolute(f64),
    Relative(f64),
}

impl Lambda {
    pub(crate) fn resolve(self, obs: &MaskedMatrix) -> Result<f64> {
        let value = match self {
            Lambda::Absolute(v) => v,
            Lambda::Relative(r) => r * obs.values().spectral_norm()?,
        };
        if value.is_finite() && value >= 0.0 {
            Ok(value)
        } else {
            Err(Error::domain(format!(
                "lambda must be finite and non-negative, got {self:?}"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    /// Ratio between consecutive weights, `lambda_{i+1} = lambda_i / eta`.
    pub eta: f64,
    /// The schedule stops once `lambda < lambda_min_rel * lambda_0`.
    pub lambda_min_rel: f64,
    /// Target for `||R(X - M)||_F / ||R(M)||_F`.
    pub tol_feas: f64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            eta: 2.0,
            lambda_min_rel: 1e-8,
            tol_feas: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: Lambda,
    /// Gradient step; 1 is the reciprocal Lipschitz constant of the data term.
    pub step: f64,
    /// Iteration cap per solve (per continuation stage for `nn_complete`,
    /// per sweep for ALS).
    pub max_iters: usize,
    /// Stop when the relative objective change falls below this.
    pub tol_rel: f64,
    pub continuation: ContinuationConfig,
    pub seed: u64,
    /// Record every k-th iteration in the trace.
    pub trace_every: usize,
    /// Worker threads available to the numerical backend; recorded only.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: Lambda::Relative(1e-2),
            step: 1.0,
            max_iters: 500,
            tol_rel: 1e-7,
            continuation: ContinuationConfig::default(),
            seed: 0,
            trace_every: 1,
            threads: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.continuation;
        let problems = [
            (
                !(self.step > 0.0 && self.step <= 1.0),
                "step must lie in (0, 1]",
            ),
            (self.max_iters == 0, "max_iters must be positive"),
            (!(self.tol_rel > 0.0), "tol_rel must be positive"),
            (!(c.eta > 1.0), "continuation eta must exceed 1"),
            (!(c.lambda_min_rel > 0.0), "lambda_min_rel must be positive"),
            (!(c.tol_feas > 0.0), "tol_feas must be positive"),
            (self.trace_every == 0, "trace_every must be positive"),
        ];
        match problems.iter().find(|(bad, _)| *bad) {
            Some((_, msg)) => Err(Error::domain(*msg)),
            None => Ok(()),
        }
    }
}

/// Per-iteration history of a solve. All vectors have equal length.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub iteration: Vec<usize>,
    pub objective: Vec<f64>,
    /// `||R(X - M)||_F / ||R(M)||_F`.
    pub residual: Vec<f64>,
    pub rank: Vec<usize>,
    pub lambda: Vec<f64>,
    pub elapsed_s: Vec<f64>,
    pub threads: usize,
}

impl ConvergenceTrace {
    pub fn len(&self) -> usize {
        self.objective.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objective.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
    /// The continuation schedule ran out before the observed entries were
    /// matched to `tol_feas`.
    InfeasibleTolerance,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletionResult {
    pub matrix: DenseMatrix,
    pub trace: ConvergenceTrace,
    pub elapsed_s: f64,
    pub solver: String,
    pub status: SolverStatus,
    pub iterations: usize,
    /// Feasibility residual of the returned matrix.
    pub residual: f64,
    /// Last regularization weight used, where applicable.
    pub lambda: f64,
}

/// Records trace entries honouring `trace_every`.
pub(crate) struct TraceRecorder {
    trace: ConvergenceTrace,
    every: usize,
    start: Instant,
}

impl TraceRecorder {
    pub fn new(cfg: &SolverConfig) -> Self {
        TraceRecorder {
            trace: ConvergenceTrace {
                threads: cfg.threads,
                ..Default::default()
            },
            every: cfg.trace_every,
            start: Instant::now(),
        }
    }

    pub fn record(
        &mut self,
        iteration: usize,
        objective: f64,
        residual: f64,
        rank: usize,
        lambda: f64,
    ) {
        if !iteration.is_multiple_of(self.every) {
            return;
        }
        let t = &mut self.trace;
        t.iteration.push(iteration);
        t.objective.push(objective);
        t.residual.push(residual);
        t.rank.push(rank);
        t.lambda.push(lambda);
        t.elapsed_s.push(self.start.elapsed().as_secs_f64());
    }

    pub fn elapsed_s(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    pub fn finish(self) -> ConvergenceTrace {
        self.trace
    }
}

/// `sum over observed cells of (x_ij - m_ij)^2`.
pub(crate) fn observed_residual_sq(x: &DenseMatrix, obs: &MaskedMatrix) -> f64 {
    obs.observed()
        .map(|(i, j, m)| {
            let d = x.get(i, j) - m;
            d * d
        })
        .sum()
}

/// `||R(M)||_F`.
pub(crate) fn observed_norm(obs: &MaskedMatrix) -> f64 {
    obs.values().frobenius_norm()
}

/// Relative objective-change test. Changes below `eps * 1/2 ||R(M)||_F^2`
/// also count as settled, so objectives decaying to zero still stop.
pub(crate) fn objective_settled(f_prev: f64, f: f64, tol_rel: f64, norm_obs: f64) -> bool {
    let floor = f64::EPSILON * 0.5 * norm_obs * norm_obs;
    (f_prev - f).abs() <= tol_rel * f_prev.abs().max(floor).max(f64::MIN_POSITIVE)
}

pub(crate) fn relative_residual(res_sq: f64, norm_obs: f64) -> f64 {
    if norm_obs > 0.0 {
        res_sq.sqrt() / norm_obs
    } else {
        res_sq.sqrt()
    }
}

pub(crate) fn check_observations(obs: &MaskedMatrix) -> Result<()> {
    if obs.mask().is_empty() {
        Err(Error::domain("no observed entries"))
    } else {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            step: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            continuation: ContinuationConfig {
                eta: 1.0,
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_json_fills_defaults() {
        let cfg: SolverConfig =
            serde_json::from_str(r#"{"lambda": {"absolute": 0.5}, "max_iters": 7}"#).unwrap();
        assert_eq!(cfg.lambda, Lambda::Absolute(0.5));
        assert_eq!(cfg.max_iters, 7);
        assert_eq!(cfg.continuation, ContinuationConfig::default());
    }
}
