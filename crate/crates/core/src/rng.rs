//! Seeded random streams. Every stochastic step in the crate draws from a
//! ChaCha stream derived from the run seed and a purpose tag, so adding a new
//! consumer never shifts the numbers another consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod tag {
    pub const INIT: u64 = 1;
    pub const MASK: u64 = 2;
    pub const VIEW_MISSING: u64 = 3;
    pub const LABEL_MISSING: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const SHUFFLE: u64 = 6;
    pub const SYNTH: u64 = 7;
    pub const TEST_VIEW_MISSING: u64 = 8;
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    mix(seed.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(31) ^ mix(tag))
}

pub fn stream(seed: u64, tag: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, tag))
}
