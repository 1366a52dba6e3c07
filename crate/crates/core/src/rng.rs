//! Counter-mode seed splitting.
//!
//! Every independent stream (bootstrap replicate, imputed cell, simulation)
//! gets its own ChaCha8 generator seeded from a hash of the master seed and
//! the stream coordinates, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(state: u64, word: u64) -> u64 {
    mix64(state ^ mix64(word.wrapping_add(GOLDEN)))
}

/// Seed of bootstrap replicate `index` under `master_seed`.
pub fn derive_replicate_seed(master_seed: u64, index: u64) -> u64 {
    derive_seed(master_seed, &[0x5245_504C, index])
}

/// Seed of the draw filling cell `(persona, round, petal)`.
pub fn derive_cell_seed(master_seed: u64, persona: usize, round: usize, petal: usize) -> u64 {
    derive_seed(
        master_seed,
        &[0x4345_4C4C, persona as u64, round as u64, petal as u64],
    )
}

/// Folds `coords` into `master_seed`, one word at a time.
pub fn derive_seed(master_seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(mix64(master_seed.wrapping_add(GOLDEN)), |s, &w| absorb(s, w))
}

pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
