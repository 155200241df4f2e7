//! Seeded random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-item seed used for embarrassingly parallel generation: `seed ⊕ index`.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

/// Mixes a stream tag into a seed so that independent consumers of the same
/// user seed do not share a random sequence.
pub fn stream_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
