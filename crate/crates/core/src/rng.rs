//! Deterministic RNG streams.
//!
//! Every unit of work (a parameter draw, a bootstrap resample, an individual in
//! a panel) gets its own ChaCha stream keyed by `(seed, index)`, so the output
//! of a run is a pure function of the master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `index` of the generator seeded by `seed`.
pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derive a child seed from `seed` and a key (splitmix64 finaliser).
pub fn derive(seed: u64, key: u64) -> u64 {
    let mut z = seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fresh child seed drawn from an existing stream.
pub fn fork(rng: &mut StreamRng) -> u64 {
    rng.next_u64()
}

// Keys separating the independent stream families of one run.
pub(crate) const KEY_THETA: u64 = 1;
pub(crate) const KEY_LIKELIHOOD: u64 = 2;
pub(crate) const KEY_BOOTSTRAP: u64 = 3;
pub(crate) const KEY_PILOT: u64 = 4;
