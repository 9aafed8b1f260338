//! Portable pseudo-random generator.
//!
//! Every random draw in the crate (k-means++ seeding, synthetic learner
//! noise, test fixtures) goes through [`XorShift64Star`] so that results can
//! be reproduced bit-for-bit by an implementation in any language:
//!
//! * seeding: the user seed is passed once through SplitMix64
//!   (`z += 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//!   z = (z ^ z>>27) * 0x94D049BB133111EB; z ^ z>>31`). A zero result is
//!   replaced by `0x9E3779B97F4A7C15`.
//! * step: xorshift64* (`x ^= x>>12; x ^= x<<25; x ^= x>>27;
//!   out = x * 0x2545F4914F6CDD1D`), all arithmetic wrapping mod 2^64.
//! * `next_f64`: `(out >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `next_below(n)`: `(out as u128 * n) >> 64`.
//! * `next_gaussian`: Box–Muller cosine branch,
//!   `sqrt(-2 ln(1 - u1)) * cos(2π u2)` with two consecutive `next_f64` draws.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = match splitmix64(seed) {
            0 => GOLDEN_GAMMA,
            s => s,
        };
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn next_below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Uniform float in `[lo, hi)`.
    pub fn next_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}
