//! Seed derivation. Every random choice in the crate draws from a ChaCha8
//! stream keyed by a base seed and a purpose-specific stream id, so
//! independent stages never share randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) mod stream {
    pub const PRIOR: u64 = 1;
    pub const CATALOG: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const SURFACE: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const VOXEL: u64 = 6;
    pub const PERTURB: u64 = 7;
    pub const DROPOUT: u64 = 8;
    pub const SPLIT: u64 = 9;
    pub const DECODE: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}
