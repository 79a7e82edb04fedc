//! Seedable, splittable random streams.
//!
//! Every stochastic routine takes a [`SimRng`] handle explicitly. Child
//! streams are derived from the parent *key* (not from its consumption
//! state), so `split(label)` is stable no matter how many draws the parent
//! has already made.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// SplitMix64 finalizer, used to mix keys and labels.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SimRng {
    key: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        let key = mix64(seed);
        Self {
            key,
            inner: ChaCha8Rng::seed_from_u64(key),
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    /// Independent child stream identified by `label`.
    pub fn split(&self, label: u64) -> Self {
        let key = mix64(self.key ^ mix64(label.wrapping_add(0xA076_1D64_78BD_642F)));
        Self {
            key,
            inner: ChaCha8Rng::seed_from_u64(key),
        }
    }

    /// A raw ChaCha stream sharing this key but living on channel `stream`.
    pub fn channel(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(stream);
        rng
    }

    /// Uniform in [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
