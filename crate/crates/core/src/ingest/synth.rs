//! Synthetic logistic streams with piecewise-constant ground truth.
//!
//! Features and the label uniforms of batch `t` come from an RNG seeded only
//! by `(seed, t)`, so two specs that differ in their drift schedule produce
//! identical batches up to the first drift time.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::driver::mix_seed;
use crate::error::{Error, Result};
use crate::model::{sigmoid, Batch, Example, Label, SparseVector, Stream};

/// At `time`, the sign of `round(magnitude * dim)` randomly chosen coordinates flips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftEvent {
    pub time: usize,
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub dim: usize,
    /// Number of batches, `t_f + 1`.
    pub batches: usize,
    pub batch_size: usize,
    pub drifts: Vec<DriftEvent>,
    /// Nonzero coordinates per example.
    pub sparsity: usize,
    /// Standard deviation of the true margin.
    pub weight_scale: f64,
    pub seed: u64,
}

const THETA_SALT: u64 = 0x7468_6574_615f_7472;
const DRIFT_SALT: u64 = 0x6472_6966_745f_6576;

impl DriftSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.dim == 0 || self.batches == 0 || self.batch_size == 0 {
            return bad("dimension, batch count and batch size must be positive".into());
        }
        if u32::try_from(self.dim).is_err() {
            return bad(format!("dimension {} exceeds the index range", self.dim));
        }
        if self.sparsity == 0 || self.sparsity > self.dim {
            return bad(format!("sparsity must lie in [1, {}], got {}", self.dim, self.sparsity));
        }
        if !(self.weight_scale >= 0.0 && self.weight_scale.is_finite()) {
            return bad(format!("weight scale must be finite and >= 0, got {}", self.weight_scale));
        }
        let t_f = self.batches - 1;
        for d in &self.drifts {
            if d.time == 0 || d.time > t_f {
                return bad(format!("drift time {} outside (0, {t_f}]", d.time));
            }
            if !(0.0..=1.0).contains(&d.magnitude) {
                return bad(format!("drift magnitude must lie in [0, 1], got {}", d.magnitude));
            }
        }
        Ok(())
    }

    /// Ground-truth parameter for every batch.
    pub fn true_thetas(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, THETA_SALT));
        let sd = self.weight_scale / (self.sparsity as f64).sqrt();
        let mut theta: Vec<f64> = (0..self.dim)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut drifts = self.drifts.clone();
        drifts.sort_by_key(|d| d.time);
        let mut out = Vec::with_capacity(self.batches);
        let mut next = 0;
        for t in 0..self.batches {
            while next < drifts.len() && drifts[next].time == t {
                let d = drifts[next];
                let flips = (d.magnitude * self.dim as f64).round() as usize;
                let mut drng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed ^ DRIFT_SALT, next as u64));
                for i in index::sample(&mut drng, self.dim, flips) {
                    theta[i] = -theta[i];
                }
                next += 1;
            }
            out.push(theta.clone());
        }
        Ok(out)
    }
}

/// Generates the stream described by `spec`.
pub fn generate_drift_stream(spec: &DriftSpec) -> Result<Stream> {
    let thetas = spec.true_thetas()?;
    let mut batches = Vec::with_capacity(spec.batches);
    for (t, theta) in thetas.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, t as u64));
        let mut examples = Vec::with_capacity(spec.batch_size);
        for _ in 0..spec.batch_size {
            let mut coords = index::sample(&mut rng, spec.dim, spec.sparsity).into_vec();
            coords.sort_unstable();
            let entries: Vec<(u32, f64)> = coords
                .into_iter()
                .map(|i| (i as u32, rng.sample::<f64, _>(StandardNormal)))
                .filter(|&(_, v)| v != 0.0)
                .collect();
            let features = SparseVector::new(entries)?;
            let u: f64 = rng.random();
            let p = sigmoid(features.dot_unchecked(theta));
            examples.push(Example::new(features, Label::from(u < p)));
        }
        batches.push(Batch::new(t, examples)?);
    }
    Stream::new(spec.dim, batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DriftSpec {
        DriftSpec {
            dim: 20,
            batches: 4,
            batch_size: 50,
            drifts: vec![],
            sparsity: 5,
            weight_scale: 3.0,
            seed: 9,
        }
    }

    #[test]
    fn deterministic_for_seed() {
        assert_eq!(generate_drift_stream(&spec()).unwrap(), generate_drift_stream(&spec()).unwrap());
        let other = DriftSpec { seed: 10, ..spec() };
        assert_ne!(generate_drift_stream(&spec()).unwrap(), generate_drift_stream(&other).unwrap());
    }

    #[test]
    fn no_drift_means_constant_truth() {
        let thetas = spec().true_thetas().unwrap();
        assert!(thetas.windows(2).all(|w| w[0] == w[1]));
        let zero = DriftSpec {
            drifts: vec![DriftEvent { time: 2, magnitude: 0.0 }],
            ..spec()
        };
        assert_eq!(generate_drift_stream(&zero).unwrap(), generate_drift_stream(&spec()).unwrap());
    }

    #[test]
    fn drift_changes_only_later_batches() {
        let drifted = DriftSpec {
            drifts: vec![DriftEvent { time: 2, magnitude: 0.5 }],
            ..spec()
        };
        let a = generate_drift_stream(&spec()).unwrap();
        let b = generate_drift_stream(&drifted).unwrap();
        assert_eq!(a.batches()[..2], b.batches()[..2]);
        assert_ne!(a.batches()[2], b.batches()[2]);
        let thetas = drifted.true_thetas().unwrap();
        let flipped = thetas[1].iter().zip(&thetas[2]).filter(|(x, y)| x != y).count();
        assert_eq!(flipped, 10);
    }

    #[test]
    fn invalid_specs() {
        let late = DriftSpec {
            drifts: vec![DriftEvent { time: 4, magnitude: 0.5 }],
            ..spec()
        };
        assert!(late.validate().is_err());
        let early = DriftSpec {
            drifts: vec![DriftEvent { time: 0, magnitude: 0.5 }],
            ..spec()
        };
        assert!(early.validate().is_err());
        assert!(DriftSpec { sparsity: 21, ..spec() }.validate().is_err());
    }
}
