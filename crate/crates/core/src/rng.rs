//! Seeded random streams.
//!
//! Every stochastic operation draws from its own ChaCha8 stream whose seed is
//! mixed from the caller's master seed, a per-operation tag and an index.
//! Adding a new consumer never shifts the numbers an existing one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier of the generator construction; bump when the derivation changes.
pub const GENERATOR: &str = "chacha8-splitmix64/v1";

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
pub mod tag {
    pub const SAMPLE_MODES: u64 = 0x5341_4d50;
    pub const PERTURB: u64 = 0x5045_5254;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const OBSERVE: u64 = 0x4f42_5356;
    pub const MC_TRIAL: u64 = 0x4d43_5452;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

/// Signed indices such as ℓ map onto the index space by zig-zag encoding.
pub fn derive_seed_signed(seed: u64, tag: u64, index: i64) -> u64 {
    derive_seed(seed, tag, ((index << 1) ^ (index >> 63)) as u64)
}

pub fn stream(seed: u64, tag: u64, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}
