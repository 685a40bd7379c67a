//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! whose seed is derived from a master seed and a stream index, so work split
//! across threads or processes reproduces the sequential result.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn substream(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(master, index))
}

/// Seed derived from a master seed and a string, e.g. a resume id.
pub fn keyed_seed(master: u64, key: &str) -> u64 {
    mix_seed(master, crate::corpus::stable_hash(key.as_bytes()))
}
