use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::sampling::{sample_indices, Rng};

/// Low-rank test instance `(A + N_A)(B + N_B)` with Gaussian factors and
/// sparse Gaussian factor noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n1: usize,
    pub n2: usize,
    pub rank: usize,
    /// Fraction of factor entries receiving noise.
    #[serde(default = "default_noise_density")]
    pub noise_density: f64,
    /// Standard deviation of the noise values.
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_noise_density() -> f64 {
    0.3
}

fn default_noise_scale() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(n1: usize, n2: usize, rank: usize, seed: u64) -> Self {
        SyntheticSpec {
            n1,
            n2,
            rank,
            noise_density: default_noise_density(),
            noise_scale: default_noise_scale(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 || self.rank == 0 {
            return Err(Error::domain("dimensions and rank must be positive"));
        }
        if self.rank > self.n1.min(self.n2) {
            return Err(Error::domain(format!(
                "rank {} exceeds min({}, {})",
                self.rank, self.n1, self.n2
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_density) {
            return Err(Error::domain("noise density must lie in [0, 1]"));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::domain("noise scale must be finite and non-negative"));
        }
        Ok(())
    }
}

fn noisy_factor(rows: usize, cols: usize, spec: &SyntheticSpec, rng: &mut Rng) -> DenseMatrix {
    let mut f = DenseMatrix::from_fn(rows, cols, |_, _| rng.standard_normal());
    let cells = rows * cols;
    let count = (spec.noise_density * cells as f64).round_ties_even() as usize;
    for cell in sample_indices(cells, count.min(cells), rng) {
        f[(cell / cols, cell % cols)] += spec.noise_scale * rng.standard_normal();
    }
    f
}

/// Generates the `n1 x n2` product of two noisy Gaussian factors; the result
/// has rank at most `spec.rank`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<DenseMatrix> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let a = noisy_factor(spec.n1, spec.rank, spec, &mut rng);
    let b = noisy_factor(spec.rank, spec.n2, spec, &mut rng);
    a.matmul(&b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectrum(spec: &SyntheticSpec) -> Vec<f64> {
        gen_synthetic(spec).unwrap().singular_values().unwrap()
    }

    #[test]
    fn noiseless_rank_is_exact() {
        let spec = SyntheticSpec {
            noise_density: 0.0,
            ..SyntheticSpec::new(30, 50, 4, 1)
        };
        let s = spectrum(&spec);
        assert!(s[3] / s[0] > 1e-6);
        assert!(s[4] / s[0] < 1e-10);
    }

    #[test]
    fn noisy_rank_is_bounded() {
        for seed in 0..5 {
            let s = spectrum(&SyntheticSpec::new(40, 60, 3, seed));
            assert!(s[3] / s[0] < 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SyntheticSpec::new(300, 1000, 5, 42);
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert!(a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = gen_synthetic(&SyntheticSpec::new(300, 1000, 5, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validation() {
        assert!(gen_synthetic(&SyntheticSpec::new(3, 3, 4, 0)).is_err());
        let bad = SyntheticSpec {
            noise_density: 1.5,
            ..SyntheticSpec::new(3, 3, 1, 0)
        };
        assert!(gen_synthetic(&bad).is_err());
    }
}
