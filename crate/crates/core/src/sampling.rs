//! Seeded uniform samplers for column subsets, observation masks and
//! train/test splits.
//!
//! Every sampler draws from [`Rng`], a thin wrapper over ChaCha8 whose
//! integer draws are taken as `u64` so that sequences agree across
//! platforms. Per-trial generators are forked from a root seed by adding the
//! trial index; within a trial, independent purposes (data, mask, column
//! selection) use separate ChaCha streams of the same seed.

use std::collections::HashMap;

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ObservationSet;

/// Seeded, portable random source.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub const ALGORITHM: &'static str = "chacha8";

    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm(&self) -> &'static str {
        Self::ALGORITHM
    }

    /// Independent generator for trial `index`, seeded with `seed + index`.
    pub fn fork(&self, index: u64) -> Rng {
        Rng::new(self.seed.wrapping_add(index))
    }

    /// Generator with the same seed on ChaCha stream `id`. Stream 0 is the
    /// one used by [`Rng::new`].
    pub fn stream(&self, id: u64) -> Rng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(id);
        Rng {
            seed: self.seed,
            inner,
        }
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n as u64) as usize
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Sorted column indices chosen for the first stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSelection {
    pub indices: Vec<usize>,
    pub alpha: f64,
    pub seed: u64,
}

impl ColumnSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// `max(1, round(alpha * n))` with ties to even.
pub fn selection_size(n: usize, alpha: f64) -> usize {
    ((alpha * n as f64).round_ties_even() as usize).clamp(1, n)
}

/// First `k` positions of a Fisher-Yates shuffle of `0..n`, in draw order.
///
/// Large populations use a sparse swap table; the draw sequence, and hence
/// the output, is the same either way.
pub fn sample_indices(n: usize, k: usize, rng: &mut Rng) -> Vec<usize> {
    assert!(k <= n, "cannot draw {k} of {n}");
    if n <= 1 << 22 || k * 4 > n {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + rng.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    } else {
        let mut swapped: HashMap<usize, usize> = HashMap::with_capacity(2 * k);
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let j = i + rng.below(n - i);
            let at_j = swapped.get(&j).copied().unwrap_or(j);
            let at_i = swapped.get(&i).copied().unwrap_or(i);
            swapped.insert(j, at_i);
            out.push(at_j);
        }
        out
    }
}

fn check_fraction(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must lie in (0, 1], got {value}"
        )))
    }
}

/// Uniformly samples `max(1, round(alpha * n2))` distinct columns.
pub fn sample_columns(n2: usize, alpha: f64, rng: &mut Rng) -> Result<ColumnSelection> {
    if n2 == 0 {
        return Err(Error::domain("cannot sample columns of an empty matrix"));
    }
    check_fraction("alpha", alpha)?;
    let mut indices = sample_indices(n2, selection_size(n2, alpha), rng);
    indices.sort_unstable();
    Ok(ColumnSelection {
        indices,
        alpha,
        seed: rng.seed(),
    })
}

/// Uniform mask with exactly `round(rho * n1 * n2)` cells.
pub fn sample_mask(n1: usize, n2: usize, rho: f64, rng: &mut Rng) -> Result<ObservationSet> {
    check_fraction("rho", rho)?;
    let total = n1 * n2;
    let count = (rho * total as f64).round_ties_even() as usize;
    if count == 0 {
        return Err(Error::domain(format!(
            "rho = {rho} observes no cell of a {n1}x{n2} matrix"
        )));
    }
    let mut pairs: Vec<(usize, usize)> = sample_indices(total, count.min(total), rng)
        .into_iter()
        .map(|cell| (cell / n2, cell % n2))
        .collect();
    pairs.sort_unstable();
    Ok(ObservationSet::from_sorted_unchecked(n1, n2, pairs))
}

/// Random partition of `omega` with `round(train_fraction * |omega|)` cells
/// in the training part.
pub fn split_train_test(
    omega: &ObservationSet,
    train_fraction: f64,
    rng: &mut Rng,
) -> Result<(ObservationSet, ObservationSet)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if omega.len() < 2 {
        return Err(Error::domain("need at least two observations to split"));
    }
    let n = omega.len();
    let n_train = (train_fraction * n as f64).round_ties_even() as usize;
    let mut in_train = vec![false; n];
    for k in sample_indices(n, n_train, rng) {
        in_train[k] = true;
    }
    let (rows, cols) = omega.shape();
    let (mut train, mut test) = (Vec::with_capacity(n_train), Vec::with_capacity(n - n_train));
    for (&pair, &t) in omega.pairs().iter().zip(&in_train) {
        if t {
            train.push(pair);
        } else {
            test.push(pair);
        }
    }
    Ok((
        ObservationSet::from_sorted_unchecked(rows, cols, train),
        ObservationSet::from_sorted_unchecked(rows, cols, test),
    ))
}
