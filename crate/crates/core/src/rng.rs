//! Keyed random streams: every draw is addressed by `(seed, key...)` so that
//! parallel generation stays deterministic regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn keyed_rng(seed: u64, key: &[u64]) -> ChaCha8Rng {
    let mixed = key
        .iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)));
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Stable 64-bit key for a string.
pub fn str_key(s: &str) -> u64 {
    let digest = Sha256::digest(s.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
