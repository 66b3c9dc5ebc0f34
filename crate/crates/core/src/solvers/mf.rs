use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::matrix::{min_norm_solve, DenseMatrix, MaskedMatrix};
use crate::sampling::Rng;

use super::{
    check_observations, objective_settled, observed_norm, observed_residual_sq, relative_residual,
    CompletionResult, SolverConfig, SolverStatus, TraceRecorder,
};

/// Low-rank factorization `L R^T` fitted by alternating ridge regressions.
///
/// Minimizes `1/2 ||R(M) - R(L R^T)||_F^2 + reg/2 (||L||_F^2 + ||R||_F^2)`.
/// Factors start from seeded Gaussian entries scaled by `1/sqrt(k)`. Each
/// half-step solves its block exactly, so the objective never increases;
/// the trace records one entry per half-step. With `reg = 0` each row is a
/// minimum-norm least-squares solve.
pub fn mf_als_complete(
    obs: &MaskedMatrix,
    k: usize,
    reg: f64,
    cfg: &SolverConfig,
) -> Result<CompletionResult> {
    cfg.validate()?;
    check_observations(obs)?;
    let (n1, n2) = obs.shape();
    if k == 0 || k > n1.min(n2) {
        return Err(Error::domain(format!(
            "factor rank must lie in 1..={}, got {k}",
            n1.min(n2)
        )));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::domain(format!(
            "reg must be finite and non-negative, got {reg}"
        )));
    }

    let mut rng = Rng::new(cfg.seed);
    let scale = 1.0 / (k as f64).sqrt();
    let mut left = DenseMatrix::from_fn(n1, k, |_, _| rng.standard_normal() * scale);
    let mut right = DenseMatrix::from_fn(n2, k, |_, _| rng.standard_normal() * scale);

    // Observed (col, value) per row and (row, value) per column.
    let mut by_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n1];
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n2];
    for (i, j, v) in obs.observed() {
        by_row[i].push((j, v));
        by_col[j].push((i, v));
    }

    let norm_obs = observed_norm(obs);
    let mut recorder = TraceRecorder::new(cfg);
    let objective = |l: &DenseMatrix, r: &DenseMatrix| -> (f64, f64) {
        let x = l.matmul(&r.transpose()).expect("factor shapes agree");
        let res_sq = observed_residual_sq(&x, obs);
        let penalty = l.frobenius_norm().powi(2) + r.frobenius_norm().powi(2);
        (0.5 * res_sq + 0.5 * reg * penalty, res_sq)
    };

    let (mut f_prev, _) = objective(&left, &right);
    let mut status = SolverStatus::MaxIterations;
    let mut res_sq = 0.0;
    let mut sweeps = 0;
    for sweep in 0..cfg.max_iters {
        update_factor(&mut left, &right, &by_row, reg)?;
        let (f_half, half_res) = objective(&left, &right);
        recorder.record(
            2 * sweep + 1,
            f_half,
            relative_residual(half_res, norm_obs),
            k,
            reg,
        );

        update_factor(&mut right, &left, &by_col, reg)?;
        let (f, r) = objective(&left, &right);
        res_sq = r;
        recorder.record(
            2 * sweep + 2,
            f,
            relative_residual(res_sq, norm_obs),
            k,
            reg,
        );
        sweeps = sweep + 1;

        if !f.is_finite() {
            return Err(Error::Divergence { iteration: sweeps });
        }
        let converged = objective_settled(f_prev, f, cfg.tol_rel, norm_obs);
        f_prev = f;
        if converged {
            status = SolverStatus::Converged;
            break;
        }
    }

    Ok(CompletionResult {
        matrix: left.matmul(&right.transpose())?,
        elapsed_s: recorder.elapsed_s(),
        trace: recorder.finish(),
        solver: "mf-als".into(),
        status,
        iterations: sweeps,
        residual: relative_residual(res_sq, norm_obs),
        lambda: reg,
    })
}

/// Re-solves every row of `target` against the fixed factor `other`.
fn update_factor(
    target: &mut DenseMatrix,
    other: &DenseMatrix,
    entries: &[Vec<(usize, f64)>],
    reg: f64,
) -> Result<()> {
    let k = other.cols();
    for (row, obs) in entries.iter().enumerate() {
        let solution = if obs.is_empty() {
            vec![0.0; k]
        } else if reg > 0.0 {
            ridge_solve(other, obs, reg)?
        } else {
            let design = Mat::<f64>::from_fn(obs.len(), k, |p, q| other.get(obs[p].0, q));
            let b: Vec<f64> = obs.iter().map(|&(_, v)| v).collect();
            min_norm_solve(design.as_ref(), &b)?
        };
        for (q, value) in solution.into_iter().enumerate() {
            target[(row, q)] = value;
        }
    }
    Ok(())
}

/// `(A^T A + reg I)^{-1} A^T b` with `A` the rows of `other` listed in `obs`.
fn ridge_solve(other: &DenseMatrix, obs: &[(usize, f64)], reg: f64) -> Result<Vec<f64>> {
    let k = other.cols();
    let mut gram = Mat::<f64>::zeros(k, k);
    let mut rhs = Mat::<f64>::zeros(k, 1);
    for &(idx, v) in obs {
        let a = other.row(idx);
        for p in 0..k {
            rhs[(p, 0)] += a[p] * v;
            for q in 0..=p {
                gram[(p, q)] += a[p] * a[q];
            }
        }
    }
    for p in 0..k {
        gram[(p, p)] += reg;
        for q in 0..p {
            gram[(q, p)] = gram[(p, q)];
        }
    }
    let llt = gram
        .llt(Side::Lower)
        .map_err(|e| Error::Numerical(format!("ridge system not positive definite: {e:?}")))?;
    let sol = llt.solve(&rhs);
    Ok((0..k).map(|p| sol[(p, 0)]).collect())
}
