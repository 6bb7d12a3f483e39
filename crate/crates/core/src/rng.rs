//! Seed derivation and sampling helpers.
//!
//! All randomness in a run flows from one base seed through named
//! sub-streams, so that e.g. trajectory resampling and molecule sampling
//! stay reproducible independently of each other.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a stream name.
pub fn stream_seed(base: u64, name: &str) -> u64 {
    let mut state = base;
    let mut out = splitmix64(&mut state);
    for byte in name.bytes() {
        state ^= u64::from(byte);
        out ^= splitmix64(&mut state);
    }
    out
}

/// Deterministic RNG for a named sub-stream of a base seed.
pub fn stream_rng(base: u64, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base, name))
}

/// RNG for the i-th element of a named sub-stream (per-sample seeding).
pub fn indexed_rng(base: u64, name: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(base, name).wrapping_add(index))
}

/// Samples an index from an unnormalized non-negative weight vector.
pub fn sample_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    debug_assert!(total > 0.0 && total.is_finite());
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Standard normal via Box-Muller.
pub fn sample_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
