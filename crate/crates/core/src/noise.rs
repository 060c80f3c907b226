//! Labeled, seeded random streams.
//!
//! Each `(label, seed)` pair selects a ChaCha8 keystream: the seed fixes the
//! key and an FNV-1a hash of the label selects the 64-bit stream id. Two
//! trajectories built from the same labels consume bit-identical draws, which
//! is what the coupled-trajectory analysis relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct NoiseStream {
    label: String,
    seed: u64,
    rng: ChaCha8Rng,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl NoiseStream {
    pub fn new(label: impl Into<String>, seed: u64) -> Self {
        let label = label.into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(label.as_bytes()));
        Self { label, seed, rng }
    }

    /// Stream for the initial diffusion of chunk `n` to `t0`.
    pub fn init(chunk: usize, seed: u64) -> Self {
        Self::new(format!("init:{chunk}"), seed)
    }

    /// Stream for the re-noise after step `k` of chunk `n`.
    pub fn renoise(chunk: usize, step: usize, seed: u64) -> Self {
        Self::new(format!("renoise:{chunk}:{step}"), seed)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `len` standard normal samples.
    pub fn gaussian<T: Real>(&mut self, len: usize) -> Vec<T> {
        (0..len)
            .map(|_| T::lit(self.rng.sample::<f64, _>(StandardNormal)))
            .collect()
    }

    pub fn gaussian_scalar(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Fresh 64-bit value, used to derive child seeds.
    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }
}

/// Draws `len` standard normals from `stream`.
pub fn gaussian_draw<T: Real>(stream: &mut NoiseStream, len: usize) -> Vec<T> {
    stream.gaussian(len)
}
