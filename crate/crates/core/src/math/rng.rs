//! Splittable deterministic random number generation.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit value. Child streams
//! are derived from `(key, index)` with a SplitMix64 mix, so any consumer can
//! rebuild the exact stream it needs (for example the noise vector of one ES
//! population member) from integers alone.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seedable generator with cheap, reproducible child streams.
#[derive(Clone, Debug)]
pub struct SplitRng {
    key: u64,
    inner: ChaCha8Rng,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        let key = splitmix64(seed);
        Self { key, inner: ChaCha8Rng::seed_from_u64(key) }
    }

    /// Key identifying this stream; `SplitRng::from_key(k)` rebuilds it from the start.
    pub fn key(&self) -> u64 {
        self.key
    }

    fn from_key(key: u64) -> Self {
        Self { key, inner: ChaCha8Rng::seed_from_u64(key) }
    }

    /// Child stream `index`. Depends only on this stream's key, never on how
    /// many values have already been drawn from it.
    pub fn split(&self, index: u64) -> Self {
        Self::from_key(splitmix64(self.key ^ splitmix64(index.wrapping_add(0x5EED))))
    }

    /// Child stream addressed by a label, for readability at call sites.
    pub fn split_named(&self, label: &str) -> Self {
        let h = label
            .bytes()
            .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01B3));
        self.split(h)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f32 {
        self.inner.random::<f32>()
    }

    pub fn uniform_f64(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn normal(&mut self) -> f32 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn fill_normal(&mut self, out: &mut [f32], std: f32) {
        for v in out.iter_mut() {
            *v = std * self.normal();
        }
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn coin(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    pub fn bernoulli(&mut self, p: f32) -> bool {
        self.uniform() < p
    }

    /// Uniformly random permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.inner);
        p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
