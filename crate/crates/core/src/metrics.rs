//! Evaluation metrics and per-trial records.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// `||M - M_hat||_F / ||M||_F`.
pub fn relative_error(m_hat: &DenseMatrix, m: &DenseMatrix) -> Result<f64> {
    if m_hat.shape() != m.shape() {
        return Err(Error::shape(format!(
            "{:?} vs {:?}",
            m_hat.shape(),
            m.shape()
        )));
    }
    let denom = m.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::domain("relative error against a zero matrix"));
    }
    Ok((m - m_hat).frobenius_norm() / denom)
}

/// Fraction of `errors` that are `<= a`.
pub fn ecdf(errors: &[f64], a: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::domain("ecdf of an empty sample"));
    }
    Ok(errors.iter().filter(|&&e| e <= a).count() as f64 / errors.len() as f64)
}

/// Step points `(a, F(a))` of the ECDF, one per distinct error value.
pub fn ecdf_steps(errors: &[f64]) -> Result<Vec<(f64, f64)>> {
    if errors.is_empty() {
        return Err(Error::domain("ecdf of an empty sample"));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut steps: Vec<(f64, f64)> = Vec::with_capacity(sorted.len());
    for (k, &e) in sorted.iter().enumerate() {
        let f = (k + 1) as f64 / n;
        match steps.last_mut() {
            Some(last) if last.0 == e => last.1 = f,
            _ => steps.push((e, f)),
        }
    }
    Ok(steps)
}

/// Rating range `[min, max]` used by NMAE and hit rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if max > min && min.is_finite() && max.is_finite() {
            Ok(RatingScale { min, max })
        } else {
            Err(Error::domain(format!(
                "rating scale needs max > min, got [{min}, {max}]"
            )))
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }
}

/// Mean absolute error over `(predicted, actual)` pairs, normalized by the
/// rating range.
pub fn nmae(pairs: &[(f64, f64)], scale: RatingScale) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("nmae of an empty sample"));
    }
    if !(scale.max > scale.min) {
        return Err(Error::domain("nmae needs max > min"));
    }
    let total: f64 = pairs.iter().map(|(p, a)| (p - a).abs()).sum();
    Ok(total / (pairs.len() as f64 * (scale.max - scale.min)))
}

/// Fraction of predictions that, clamped to the scale and rounded half-up,
/// equal the actual rating.
pub fn hit_rate(pairs: &[(f64, f64)], scale: RatingScale) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::domain("hit rate of an empty sample"));
    }
    let hits = pairs
        .iter()
        .filter(|&&(p, a)| (p.clamp(scale.min, scale.max) + 0.5).floor() == a)
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// `20 log10(||M||_F / ||M_hat - M||_F)` in decibels; `+inf` when the
/// reconstruction is exact.
pub fn snr(m_hat: &DenseMatrix, m: &DenseMatrix) -> Result<f64> {
    if m_hat.shape() != m.shape() {
        return Err(Error::shape(format!(
            "{:?} vs {:?}",
            m_hat.shape(),
            m.shape()
        )));
    }
    let err = (m_hat - m).frobenius_norm();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (m.frobenius_norm() / err).log10())
}

/// One algorithm run on one generated or resampled instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub algorithm: String,
    pub alpha: Option<f64>,
    pub rho: f64,
    pub rank: Option<usize>,
    /// `None` when the trial failed.
    pub epsilon: Option<f64>,
    pub elapsed_s: f64,
    /// Optional metrics keyed `nmae`, `hr`, `snr`.
    pub extra: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const TRIAL_CSV_HEADER: &str = "trial,algorithm,alpha,rho,rank,epsilon,elapsed_s,nmae,hr,snr";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrialRecord {
    /// CSV row matching [`TRIAL_CSV_HEADER`]; missing values are empty.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.algorithm,
            opt(self.alpha),
            self.rho,
            opt(self.rank),
            opt(self.epsilon),
            self.elapsed_s,
            opt(self.extra.get("nmae")),
            opt(self.extra.get("hr")),
            opt(self.extra.get("snr")),
        )
    }
}

pub fn write_trials_csv<W: Write>(mut out: W, records: &[TrialRecord]) -> std::io::Result<()> {
    writeln!(out, "{TRIAL_CSV_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}
