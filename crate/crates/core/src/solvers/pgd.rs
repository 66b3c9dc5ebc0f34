use crate::error::{Error, Result};
use crate::matrix::{svt_parts, DenseMatrix, MaskedMatrix};

use super::{
    check_observations, objective_settled, observed_norm, observed_residual_sq, relative_residual,
    CompletionResult, SolverConfig, SolverStatus, TraceRecorder,
};

/// State carried between proximal-gradient runs.
pub(crate) struct Iterate {
    pub x: DenseMatrix,
    pub nuclear_norm: f64,
    pub rank: usize,
}

impl Iterate {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Iterate {
            x: DenseMatrix::zeros(rows, cols),
            nuclear_norm: 0.0,
            rank: 0,
        }
    }

    pub fn from_matrix(x: &DenseMatrix) -> Result<Self> {
        let s = x.singular_values()?;
        let cutoff = 1e-12 * s.first().copied().unwrap_or(0.0);
        Ok(Iterate {
            x: x.clone(),
            nuclear_norm: s.iter().sum(),
            rank: s.iter().filter(|&&v| v > cutoff).count(),
        })
    }
}

pub(crate) struct RunSummary {
    pub iterations: usize,
    pub converged: bool,
    pub residual_sq: f64,
}

/// Proximal gradient iterations at a fixed `lambda`, starting from `state`.
///
/// `iter_offset` numbers trace entries continuously across runs.
pub(crate) fn run_pgd(
    obs: &MaskedMatrix,
    state: &mut Iterate,
    lambda: f64,
    cfg: &SolverConfig,
    recorder: &mut TraceRecorder,
    iter_offset: usize,
) -> Result<RunSummary> {
    let t = cfg.step;
    let norm_obs = observed_norm(obs);
    let mut res_sq = observed_residual_sq(&state.x, obs);
    let mut f_prev = 0.5 * res_sq + lambda * state.nuclear_norm;

    for k in 0..cfg.max_iters {
        let mut y = state.x.clone();
        for (i, j, m) in obs.observed() {
            y[(i, j)] += t * (m - y.get(i, j));
        }
        if !y.is_finite() {
            return Err(Error::Divergence {
                iteration: iter_offset + k,
            });
        }
        let shrunk = svt_parts(&y, t * lambda)?;
        if !shrunk.matrix.is_finite() {
            return Err(Error::Divergence {
                iteration: iter_offset + k + 1,
            });
        }
        state.x = shrunk.matrix;
        state.nuclear_norm = shrunk.nuclear_norm;
        state.rank = shrunk.rank;

        res_sq = observed_residual_sq(&state.x, obs);
        let f = 0.5 * res_sq + lambda * state.nuclear_norm;
        recorder.record(
            iter_offset + k + 1,
            f,
            relative_residual(res_sq, norm_obs),
            state.rank,
            lambda,
        );
        let converged = objective_settled(f_prev, f, cfg.tol_rel, norm_obs);
        f_prev = f;
        if converged {
            return Ok(RunSummary {
                iterations: k + 1,
                converged: true,
                residual_sq: res_sq,
            });
        }
    }
    Ok(RunSummary {
        iterations: cfg.max_iters,
        converged: false,
        residual_sq: res_sq,
    })
}

/// Proximal gradient descent from `X = 0` with the configured `lambda`.
pub fn pgd_complete(obs: &MaskedMatrix, cfg: &SolverConfig) -> Result<CompletionResult> {
    let (n1, n2) = obs.shape();
    pgd_run(obs, cfg, Iterate::zeros(n1, n2))
}

/// Proximal gradient descent warm-started at `x0`.
pub fn pgd_complete_from(
    obs: &MaskedMatrix,
    cfg: &SolverConfig,
    x0: &DenseMatrix,
) -> Result<CompletionResult> {
    if x0.shape() != obs.shape() {
        return Err(Error::shape(
            "warm start does not match the observation shape",
        ));
    }
    pgd_run(obs, cfg, Iterate::from_matrix(x0)?)
}

fn pgd_run(obs: &MaskedMatrix, cfg: &SolverConfig, mut state: Iterate) -> Result<CompletionResult> {
    cfg.validate()?;
    check_observations(obs)?;
    let lambda = cfg.lambda.resolve(obs)?;
    let mut recorder = TraceRecorder::new(cfg);
    let summary = run_pgd(obs, &mut state, lambda, cfg, &mut recorder, 0)?;
    Ok(CompletionResult {
        matrix: state.x,
        elapsed_s: recorder.elapsed_s(),
        trace: recorder.finish(),
        solver: "pgd".into(),
        status: if summary.converged {
            SolverStatus::Converged
        } else {
            SolverStatus::MaxIterations
        },
        iterations: summary.iterations,
        residual: relative_residual(summary.residual_sq, observed_norm(obs)),
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ObservationSet;
    use crate::sampling::{sample_mask, Rng};
    use crate::solvers::Lambda;

    fn low_rank(n1: usize, n2: usize, r: usize, seed: u64) -> DenseMatrix {
        let mut rng = Rng::new(seed);
        let a = DenseMatrix::from_fn(n1, r, |_, _| rng.standard_normal());
        let b = DenseMatrix::from_fn(r, n2, |_, _| rng.standard_normal());
        a.matmul(&b).unwrap()
    }

    #[test]
    fn fully_observed_zero_lambda_returns_input() {
        let m = low_rank(8, 12, 3, 1);
        let cfg = SolverConfig {
            lambda: Lambda::Absolute(0.0),
            ..Default::default()
        };
        let res = pgd_complete(&MaskedMatrix::fully_observed(m.clone()), &cfg).unwrap();
        assert!(res.matrix.max_abs_diff(&m) < 1e-9);
        assert_eq!(res.status, SolverStatus::Converged);
    }

    #[test]
    fn large_lambda_shrinks_to_zero() {
        let m = low_rank(10, 15, 2, 2);
        let mask = sample_mask(10, 15, 0.6, &mut Rng::new(2)).unwrap();
        let obs = MaskedMatrix::new(m, mask).unwrap();
        let lambda0 = obs.values().spectral_norm().unwrap();
        let cfg = SolverConfig {
            lambda: Lambda::Absolute(lambda0 * 1.0000001),
            max_iters: 1,
            ..Default::default()
        };
        let res = pgd_complete(&obs, &cfg).unwrap();
        assert_eq!(res.matrix.frobenius_norm(), 0.0);
        assert_eq!(res.trace.rank, vec![0]);
    }

    #[test]
    fn objective_is_monotone() {
        let m = low_rank(20, 30, 2, 3);
        let mask = sample_mask(20, 30, 0.5, &mut Rng::new(3)).unwrap();
        let obs = MaskedMatrix::new(m, mask).unwrap();
        let cfg = SolverConfig {
            lambda: Lambda::Relative(0.05),
            tol_rel: 1e-12,
            max_iters: 300,
            ..Default::default()
        };
        let res = pgd_complete(&obs, &cfg).unwrap();
        let f0 = 0.5 * obs.values().frobenius_norm().powi(2);
        let mut prev = f0;
        for &f in &res.trace.objective {
            assert!(
                f <= prev * (1.0 + 1e-12) + 1e-12,
                "objective rose from {prev} to {f}"
            );
            prev = f;
        }
    }

    #[test]
    fn fixed_point_terminates_immediately() {
        let m = low_rank(12, 18, 2, 4);
        let mask = sample_mask(12, 18, 0.6, &mut Rng::new(4)).unwrap();
        let obs = MaskedMatrix::new(m, mask).unwrap();
        let lambda = Lambda::Absolute(0.5);
        // Iterate the proximal map directly until it stops moving.
        let step = |x: &DenseMatrix| {
            let mut y = x.clone();
            for (i, j, v) in obs.observed() {
                y[(i, j)] = v;
            }
            crate::matrix::svt(&y, 0.5).unwrap()
        };
        let mut star = DenseMatrix::zeros(12, 18);
        for _ in 0..200_000 {
            let next = step(&star);
            let moved = next.max_abs_diff(&star);
            star = next;
            if moved < 1e-14 {
                break;
            }
        }
        let y = {
            let mut y = star.clone();
            for (i, j, v) in obs.observed() {
                y[(i, j)] = v;
            }
            y
        };
        let again = crate::matrix::svt(&y, 0.5).unwrap();
        assert!(again.max_abs_diff(&star) < 1e-10);

        let cfg = SolverConfig {
            lambda,
            ..Default::default()
        };
        let res = pgd_complete_from(&obs, &cfg, &star).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.matrix.max_abs_diff(&star) < 1e-10);
    }

    #[test]
    fn empty_mask_is_rejected() {
        let m = DenseMatrix::identity(3);
        let obs = MaskedMatrix::new(m, ObservationSet::empty(3, 3)).unwrap();
        assert!(matches!(
            pgd_complete(&obs, &SolverConfig::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn trace_every_thins_records() {
        let m = low_rank(10, 10, 2, 5);
        let obs =
            MaskedMatrix::new(m, sample_mask(10, 10, 0.7, &mut Rng::new(5)).unwrap()).unwrap();
        let cfg = SolverConfig {
            tol_rel: 1e-14,
            max_iters: 40,
            trace_every: 10,
            ..Default::default()
        };
        let res = pgd_complete(&obs, &cfg).unwrap();
        assert_eq!(res.trace.iteration, vec![10, 20, 30, 40]);
        assert_eq!(res.trace.residual.len(), 4);
        assert_eq!(res.trace.elapsed_s.len(), 4);
    }
}
