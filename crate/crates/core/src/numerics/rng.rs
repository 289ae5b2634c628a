//! Deterministic pseudo-random numbers.
//!
//! A thin wrapper over xoshiro256** (`rand_xoshiro`), seeded by expanding a
//! 64-bit seed through SplitMix64. Normal and gamma variates come from
//! `rand_distr`; Dirichlet draws are gammas normalised to sum one. With the
//! lockfile pinned, a seed yields the same stream on every platform, so
//! checkpoints and data splits are reproducible.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rand_xoshiro::{SplitMix64, Xoshiro256StarStar};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    inner: Xoshiro256StarStar,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Mixes a seed with a stream index into an independent child seed.
    pub fn derive_seed(seed: u64, stream: u64) -> u64 {
        SplitMix64::seed_from_u64(seed ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)).next_u64()
    }

    /// Generator positioned at the raw state words `s`.
    pub fn from_state(s: [u64; 4]) -> Self {
        let mut bytes = [0u8; 32];
        for (chunk, w) in bytes.chunks_mut(8).zip(s) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Self {
            inner: Xoshiro256StarStar::from_seed(bytes),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    /// Standard normal sample.
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Gamma(shape, 1) sample.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive and finite")
            .sample(&mut self.inner)
    }

    /// Dirichlet(alphas) sample via normalised gamma draws.
    pub fn dirichlet(&mut self, alphas: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = alphas.iter().map(|&a| self.gamma(a)).collect();
        let total: f64 = g.iter().sum();
        if total > 0.0 {
            g.iter_mut().for_each(|v| *v /= total);
        } else {
            // every gamma underflowed (tiny shapes); put the mass on one part
            let k = self.below(g.len());
            g.iter_mut()
                .enumerate()
                .for_each(|(i, v)| *v = f64::from(u8::from(i == k)));
        }
        g
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}
