//! Seeded randomness with named, independent substreams.
//!
//! Every pipeline stage draws from its own substream, derived by hashing the
//! parent key with a label. Turning one stage's noise on or off therefore
//! never shifts the draws seen by another stage.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

const TAG_LABEL: u8 = 0;
const TAG_INDEX: u8 = 1;

pub struct Rng {
    key: [u8; 32],
    inner: ChaCha20Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"trajsynth/root");
        h.update(seed.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self {
            key,
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    /// Independent substream identified by `label`. Does not advance `self`.
    pub fn derive(&self, label: &str) -> Rng {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([TAG_LABEL]);
        h.update(label.as_bytes());
        Self::from_key(h.finalize().into())
    }

    /// Independent substream identified by an index (one per trajectory,
    /// repetition, ...). Does not advance `self`.
    pub fn derive_index(&self, index: u64) -> Rng {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update([TAG_INDEX]);
        h.update(index.to_le_bytes());
        Self::from_key(h.finalize().into())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Uniform draw on [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open()
    }

    /// Samples an index with probability proportional to `weights`.
    /// Non-positive weights are never chosen; returns `None` when the total
    /// positive weight is zero.
    pub fn weighted_index(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().filter(|w| **w > 0.0).sum();
        if !(total > 0.0) {
            return None;
        }
        Some(pick(weights, total * self.uniform_open()))
    }
}

fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if target < acc {
                return i;
            }
        }
    }
    last
}

/// Precomputed cumulative weights for repeated categorical draws.
#[derive(Debug, Clone)]
pub struct Categorical {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    /// Returns `None` when no weight is positive.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let mut acc = 0.0;
        let mut last_positive = 0;
        let cumulative: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                if w > 0.0 {
                    acc += w;
                    last_positive = i;
                }
                acc
            })
            .collect();
        if acc > 0.0 {
            Some(Self {
                cumulative,
                last_positive,
            })
        } else {
            None
        }
    }

    pub fn total(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        self.index_for(rng.uniform_open())
    }

    /// Inverse-CDF lookup for a quantile `u` in (0, 1).
    pub fn index_for(&self, u: f64) -> usize {
        let target = u * self.total();
        let i = self.cumulative.partition_point(|&c| c <= target);
        i.min(self.last_positive)
    }
}
