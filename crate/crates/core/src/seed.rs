//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a `u64`.
//! Sub-streams are derived from a master seed and a tag so that independent
//! consumers never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags for the sub-seeds derived from a master seed.
pub mod tag {
    pub const SWD: u64 = 0x5744;
    pub const TRAIN: u64 = 0x5452;
    pub const REPTILE: u64 = 0x5250;
    pub const SYNTH: u64 = 0x5359;
    pub const SUBSAMPLE: u64 = 0x5353;
    pub const PCA: u64 = 0x5043;
    pub const RANDOM_DIRECTIONS: u64 = 0x5244;
    pub const SPLIT: u64 = 0x5350;
    pub const INIT: u64 = 0x494e;
    pub const SHUFFLE: u64 = 0x5348;
    pub const DROPOUT: u64 = 0x4450;
}

/// SplitMix64 finalizer over `master ^ (tag * golden)`.
pub fn derive(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, tag: u64) -> ChaCha8Rng {
    rng(derive(master, tag))
}
