//! Deterministic keyed random streams for reproducible Monte Carlo runs.
//!
//! Every consumer derives a stream from a tuple of integer key parts. The
//! same key always yields the same stream and distinct keys yield
//! statistically independent streams, so replications can run in any order
//! (or concurrently) without changing results.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// SplitMix64 finalizer, used to mix key parts into a 32-byte ChaCha seed.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Collapses key parts into a single 64-bit key.
pub fn derive_key(parts: &[u64]) -> u64 {
    let mut state = 0x0dde_ca5e_0dde_ca5e;
    let mut acc = 0;
    for &p in parts {
        state ^= p.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        acc ^= splitmix64(&mut state);
    }
    acc
}

/// A keyed Gaussian stream: draw `i` is a fixed function of (key, i).
pub struct GaussianStream {
    rng: ChaCha12Rng,
}

impl GaussianStream {
    pub fn new(parts: &[u64]) -> Self {
        let mut state = derive_key(parts);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self {
            rng: ChaCha12Rng::from_seed(seed),
        }
    }

    /// Next standard normal draw. Each draw consumes exactly two 64-bit
    /// words, so draw `i` always maps to stream positions `2i`, `2i+1`.
    pub fn next_standard_normal(&mut self) -> f64 {
        let a = self.rng.next_u64();
        let b = self.rng.next_u64();
        // Box-Muller on open-interval uniforms; (a>>11)+1 keeps u1 > 0.
        let u1 = ((a >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0);
        let u2 = (b >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Next uniform draw in [0, 1).
    pub fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }
}
