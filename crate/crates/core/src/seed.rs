//! Derivation of per-subsystem seeds from the single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SYNTH: u64 = 0;
pub const MASK: u64 = 1;
pub const INIT: u64 = 2;
pub const SHUFFLE: u64 = 3;
pub const KMEANS: u64 = 4;

/// SplitMix64 finalizer over `(seed, stream)`.
pub fn derive(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
