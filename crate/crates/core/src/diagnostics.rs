//! Coherence, conditioning and sample-complexity calculators.
//!
//! The coherence of a `k`-dimensional subspace `U` of `R^n` is
//! `(n / k) * max_i ||P_U e_i||^2`; for an orthonormal basis this is the
//! largest squared row norm scaled by `n / k`. A matrix's coherence `mu_0`
//! is the larger of the coherences of its left and right singular
//! subspaces.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, SvdFactors};

/// Relative singular-value cutoff used to decide numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

const ORTHONORMAL_TOL: f64 = 1e-8;

/// Coherence of the span of an orthonormal `basis` (n x k).
pub fn subspace_coherence(basis: &DenseMatrix) -> Result<f64> {
    let (n, k) = basis.shape();
    if k > n {
        return Err(Error::domain(format!(
            "{k} orthonormal columns cannot live in R^{n}"
        )));
    }
    let gram = basis.transpose().matmul(basis)?;
    let deviation = gram.max_abs_diff(&DenseMatrix::identity(k));
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::domain(format!(
            "basis is not column-orthonormal (max |U^T U - I| = {deviation:e})"
        )));
    }
    Ok(max_row_norm_sq(basis) * n as f64 / k as f64)
}

fn max_row_norm_sq(basis: &DenseMatrix) -> f64 {
    (0..basis.rows())
        .map(|i| basis.row(i).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub mu0: f64,
    pub mu_left: f64,
    pub mu_right: f64,
    pub rank: usize,
}

fn leading_factors(x: &DenseMatrix, rank_tol: f64) -> Result<(SvdFactors, usize)> {
    if !x.is_finite() {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    let svd = x.thin_svd()?;
    let sigma1 = svd.sigma.first().copied().unwrap_or(0.0);
    if sigma1 == 0.0 {
        return Err(Error::domain("zero matrix has no singular subspace"));
    }
    let rank = svd.sigma.iter().filter(|&&s| s > rank_tol * sigma1).count();
    Ok((svd, rank))
}

/// `mu_0(X)` over the singular vectors whose values exceed
/// `rank_tol * sigma_1`.
pub fn coherence(x: &DenseMatrix, rank_tol: f64) -> Result<Coherence> {
    let (svd, rank) = leading_factors(x, rank_tol)?;
    let top = svd.truncate(rank);
    let mu_left = subspace_coherence(&top.u)?;
    let mu_right = subspace_coherence(&top.v)?;
    Ok(Coherence {
        mu0: mu_left.max(mu_right),
        mu_left,
        mu_right,
        rank,
    })
}

/// `sigma_1 / sigma_r` with `r` the numerical rank.
pub fn condition_number(x: &DenseMatrix, rank_tol: f64) -> Result<f64> {
    let (svd, rank) = leading_factors(x, rank_tol)?;
    Ok(svd.sigma[0] / svd.sigma[rank - 1])
}

/// Inputs to [`recovery_bounds`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryInputs {
    pub n1: usize,
    pub n2: usize,
    /// Rank of `M`.
    pub rank: usize,
    /// Rank of the column submatrix `C`.
    pub rank_c: usize,
    pub mu0_m: f64,
    pub mu0_c: f64,
    pub kappa: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBounds {
    /// Columns needed: `ceil(7 mu0(M) r (gamma + ln r))`.
    pub d_min: usize,
    /// Observed entries needed:
    /// `ceil(r_C n2 mu0(C) (gamma + ln(n2 r_C / 2)))`.
    pub omega_min: usize,
    /// `1 - 3 exp(-gamma)`, floored at zero.
    pub success_prob: f64,
    /// Columns for the coherence-transfer bound: `ceil(1.06 mu0(M) r ln(r n2))`.
    pub thm1_d_min: usize,
    /// A-priori bound on `mu0(C)`: `100 kappa^2 mu0(M)`.
    pub coherence_inflation: f64,
}

pub fn recovery_bounds(p: &RecoveryInputs) -> Result<RecoveryBounds> {
    if !(p.gamma > 0.0 && p.gamma.is_finite()) {
        return Err(Error::domain(format!(
            "gamma must be positive, got {}",
            p.gamma
        )));
    }
    if p.n1 == 0 || p.n2 == 0 || p.rank == 0 || p.rank_c == 0 {
        return Err(Error::domain("dimensions and ranks must be positive"));
    }
    if p.rank_c > p.rank {
        return Err(Error::domain("rank of C cannot exceed rank of M"));
    }
    for (name, v) in [("mu0_m", p.mu0_m), ("mu0_c", p.mu0_c), ("kappa", p.kappa)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be positive, got {v}")));
        }
    }
    let r = p.rank as f64;
    let rc = p.rank_c as f64;
    let n2 = p.n2 as f64;
    let count = |v: f64| (v.ceil() as usize).max(1);

    // 1 - 3 e^{-gamma} = -expm1(ln 3 - gamma); exact zero at gamma = ln 3.
    let prob = -(3f64.ln() - p.gamma).exp_m1();

    Ok(RecoveryBounds {
        d_min: count(7.0 * p.mu0_m * r * (p.gamma + r.ln())),
        omega_min: count(rc * n2 * p.mu0_c * (p.gamma + (n2 * rc / 2.0).ln())),
        success_prob: if prob > 0.0 { prob } else { 0.0 },
        thm1_d_min: count(1.06 * p.mu0_m * r * (r * n2).ln()),
        coherence_inflation: 100.0 * p.kappa * p.kappa * p.mu0_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(mu0: f64, r: usize, gamma: f64) -> RecoveryInputs {
        RecoveryInputs {
            n1: 300,
            n2: 1000,
            rank: r,
            rank_c: r,
            mu0_m: mu0,
            mu0_c: mu0,
            kappa: 2.0,
            gamma,
        }
    }

    #[test]
    fn diagonal_direction_has_unit_coherence() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let u = DenseMatrix::from_rows(&[vec![h], vec![h]]).unwrap();
        assert!((subspace_coherence(&u).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn basis_vector_is_maximally_coherent() {
        let u = DenseMatrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!((subspace_coherence(&u).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn whole_space_has_unit_coherence() {
        assert!((subspace_coherence(&DenseMatrix::identity(5)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_orthonormal_basis_is_rejected() {
        let u = DenseMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(subspace_coherence(&u), Err(Error::Domain(_))));
    }

    #[test]
    fn matrix_coherence_extremes() {
        let c = coherence(&DenseMatrix::identity(4), DEFAULT_RANK_TOL).unwrap();
        assert!((c.mu0 - 1.0).abs() < 1e-12);
        assert_eq!(c.rank, 4);
        let mut e11 = DenseMatrix::zeros(4, 4);
        e11[(0, 0)] = 1.0;
        let c = coherence(&e11, DEFAULT_RANK_TOL).unwrap();
        assert!((c.mu0 - 4.0).abs() < 1e-12);
        assert_eq!(c.rank, 1);
        assert!(coherence(&DenseMatrix::zeros(3, 3), DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn condition_numbers() {
        let k = condition_number(&DenseMatrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        let k =
            condition_number(&DenseMatrix::from_diagonal(&[4.0, 2.0]), DEFAULT_RANK_TOL).unwrap();
        assert!((k - 2.0).abs() < 1e-12);
        assert!(condition_number(&DenseMatrix::zeros(2, 2), DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn bounds_examples() {
        let b = recovery_bounds(&inputs(1.0, 5, 10f64.ln())).unwrap();
        assert_eq!(b.d_min, 137);
        let b = recovery_bounds(&inputs(1.0, 1, 1.0)).unwrap();
        assert_eq!(b.d_min, 7);
        let b = recovery_bounds(&inputs(1.0, 5, 3f64.ln())).unwrap();
        assert_eq!(b.success_prob, 0.0);
        let b = recovery_bounds(&inputs(1.5, 5, 3.0)).unwrap();
        assert!((b.success_prob - (1.0 - 3.0 * (-3.0f64).exp())).abs() < 1e-15);
        assert_eq!(b.coherence_inflation, 600.0);
        assert_eq!(
            b.thm1_d_min,
            (1.06 * 1.5 * 5.0 * 5000f64.ln()).ceil() as usize
        );
    }

    #[test]
    fn bounds_domain() {
        assert!(recovery_bounds(&inputs(1.0, 5, 0.0)).is_err());
        assert!(recovery_bounds(&inputs(1.0, 5, -1.0)).is_err());
        let mut p = inputs(1.0, 5, 1.0);
        p.rank_c = 6;
        assert!(recovery_bounds(&p).is_err());
    }
}
