//! Counter-based random streams.
//!
//! Every trajectory (or shooting start) draws from its own ChaCha stream keyed
//! by `(seed, index)`, so results do not depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Independent stream number `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Stream index reserved for resampling; trajectory indices never reach it.
pub const RESAMPLING_STREAM: u64 = u64::MAX;

/// Seed for the `index`-th sub-run (e.g. one point of a sweep) under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
