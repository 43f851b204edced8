//! Seed derivation. Every random decision in the crate flows from a `u64`
//! seed through these helpers, so runs are a pure function of their seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a list of
/// stream identifiers.
pub fn derive_seed(parent: u64, stream: &[u64]) -> u64 {
    stream.iter().fold(mix64(parent), |acc, &s| {
        mix64(acc ^ mix64(s.wrapping_add(0x632b_e59b_d9b4_e019)))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
