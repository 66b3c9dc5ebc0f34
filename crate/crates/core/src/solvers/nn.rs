use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, MaskedMatrix};

use super::pgd::{run_pgd, Iterate};
use super::{
    check_observations, observed_norm, relative_residual, CompletionResult, SolverConfig,
    SolverStatus, TraceRecorder,
};

/// Nuclear-norm completion constrained to the observed entries,
/// approximated by lambda-continuation.
///
/// Starts at `lambda_0 = ||R(M)||_2` and divides by `eta` after each
/// warm-started proximal-gradient solve until the relative feasibility
/// residual drops below `tol_feas` or `lambda` falls under
/// `lambda_min_rel * lambda_0`. Running out of schedule is reported through
/// [`SolverStatus::InfeasibleTolerance`], not as an error.
pub fn nn_complete(obs: &MaskedMatrix, cfg: &SolverConfig) -> Result<CompletionResult> {
    cfg.validate()?;
    check_observations(obs)?;
    let lambda0 = obs.values().spectral_norm()?;
    let floor = cfg.continuation.lambda_min_rel * lambda0;
    let mut schedule = Vec::new();
    let mut lambda = lambda0;
    while lambda >= floor && lambda > 0.0 {
        schedule.push(lambda);
        lambda /= cfg.continuation.eta;
    }
    nn_complete_schedule(obs, cfg, &schedule, None)
}

/// Continuation over an explicit, decreasing `schedule`, optionally warm
/// started at `x0`. Stops early once the feasibility target is met.
pub fn nn_complete_schedule(
    obs: &MaskedMatrix,
    cfg: &SolverConfig,
    schedule: &[f64],
    x0: Option<&DenseMatrix>,
) -> Result<CompletionResult> {
    cfg.validate()?;
    check_observations(obs)?;
    if schedule.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::domain(
            "schedule weights must be finite and non-negative",
        ));
    }
    let (n1, n2) = obs.shape();
    let mut state = match x0 {
        Some(x) if x.shape() != obs.shape() => {
            return Err(Error::shape(
                "warm start does not match the observation shape",
            ))
        }
        Some(x) => Iterate::from_matrix(x)?,
        None => Iterate::zeros(n1, n2),
    };
    let norm_obs = observed_norm(obs);
    let mut recorder = TraceRecorder::new(cfg);
    let mut iterations = 0;
    let mut residual = relative_residual(super::observed_residual_sq(&state.x, obs), norm_obs);
    let mut last_lambda = schedule.first().copied().unwrap_or(0.0);
    let mut feasible = norm_obs == 0.0 || residual < cfg.continuation.tol_feas;

    for &lambda in schedule {
        if feasible {
            break;
        }
        let run = run_pgd(obs, &mut state, lambda, cfg, &mut recorder, iterations)?;
        iterations += run.iterations;
        last_lambda = lambda;
        residual = relative_residual(run.residual_sq, norm_obs);
        feasible = residual < cfg.continuation.tol_feas;
    }

    Ok(CompletionResult {
        matrix: state.x,
        elapsed_s: recorder.elapsed_s(),
        trace: recorder.finish(),
        solver: "nn".into(),
        status: if feasible {
            SolverStatus::Converged
        } else {
            SolverStatus::InfeasibleTolerance
        },
        iterations,
        residual,
        lambda: last_lambda,
    })
}
