//! Seed derivation for independent random substreams.
//!
//! A substream for `(seed, index)` is a ChaCha8 generator seeded with
//! `derive_seed(seed, index)`, where
//!
//! ```text
//! derive_seed(seed, index) = splitmix64(seed ^ splitmix64(index + 0x9E3779B97F4A7C15))
//! ```
//!
//! and `splitmix64` is the finalizer of Steele, Lea and Flood's SplitMix64.
//! Multi-coordinate seeds chain the derivation one coordinate at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(GOLDEN_GAMMA)))
}

/// Seed derived from `seed` and a path of coordinates.
pub fn derive_seed_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| derive_seed(s, i))
}

pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}
