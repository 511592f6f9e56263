//! The single pseudo-random generator used throughout the crate.
//!
//! Everything runs on [`ChaCha8Rng`]: it is seeded from a `u64` and carries a
//! 64-bit stream id, so independent streams (data generation, per-cell
//! training) can be carved out of one master seed without sharing state.
//!
//! A Bernoulli draw consumes exactly one `u64` from the generator, which keeps
//! traces replayable: the k-th mask bit of iteration t always comes from the
//! same generator word.

use rand::{RngCore, SeedableRng};
pub use rand_chacha::ChaCha8Rng as DropRng;

/// Stream reserved for synthetic data generation.
pub const DATA_STREAM: u64 = 0x_da7a;
/// Stream used by a training run (initialization, then masks).
pub const TRAIN_STREAM: u64 = 0;

/// Generator for `seed` positioned at the start of `stream`.
pub fn stream(seed: u64, stream: u64) -> DropRng {
    let mut rng = DropRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives the seed of grid cell `index` from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    stream(master, 1 + index).next_u64()
}

/// Uniform in [0, 1) from the top 53 bits of one generator output.
#[inline]
pub fn unit_f64(rng: &mut DropRng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// One Bernoulli(`p`) draw; consumes exactly one `u64`.
#[inline]
pub fn bernoulli(rng: &mut DropRng, p: f64) -> bool {
    unit_f64(rng) < p
}
