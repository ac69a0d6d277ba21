//! Seeded SplitMix64 stream shared by weight init, random channel choice and
//! scene synthesis.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub struct SeedStream {
    inner: SplitMix64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream { inner: SplitMix64::seed_from_u64(seed) }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` from the top 53 bits of one draw.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    /// Index in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn rng(&mut self) -> &mut SplitMix64 {
        &mut self.inner
    }
}
