//! Seed derivation.
//!
//! Every random stream in the crate comes from a single 64-bit master seed.
//! Child seeds are derived by hashing `(parent, index)` with SplitMix64, and the
//! resulting seed keys a ChaCha8 stream. Derivation is order-independent: the
//! stream for batch 17 is the same whether batches are generated serially or in
//! parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed for `index` under `parent`.
#[inline]
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_mul(GOLDEN) ^ 0xD1B5_4A32_D192_ED03))
}

/// Seed derived along a path of indices, e.g. `[config, batch]`.
pub fn derive_path(parent: u64, path: &[u64]) -> u64 {
    path.iter().fold(parent, |s, &i| derive_seed(s, i))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream labels, so that different consumers of one seed never collide.
pub(crate) mod label {
    pub const ROTATION: u64 = 0x524f_5441;
    pub const ANCHORS: u64 = 0x414e_4348;
    pub const POSITIVES: u64 = 0x504f_5349;
    pub const SHARED: u64 = 0x5348_4152;
}
