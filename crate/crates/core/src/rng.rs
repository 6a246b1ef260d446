//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a user seed mixed with a purpose tag, so independent consumers of
//! one seed never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn rng_for(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, parts))
}

// Purpose tags.
pub(crate) const TAG_WALK: u64 = 1;
pub(crate) const TAG_FEATURES: u64 = 2;
pub(crate) const TAG_NOISE: u64 = 3;
pub(crate) const TAG_KMEANS: u64 = 4;
pub(crate) const TAG_SAMPLE: u64 = 5;
pub(crate) const TAG_INIT: u64 = 6;
pub(crate) const TAG_PROJECTION: u64 = 7;
pub(crate) const TAG_RANDOM_SUMMARY: u64 = 8;
