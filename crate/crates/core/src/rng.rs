//! Seed handling.
//!
//! Every consumer of randomness asks for its own named stream. A stream is
//! keyed by `(seed, purpose, index)`, so adding a new consumer never shifts
//! the numbers another one sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one purpose.
pub fn stream(seed: u64, purpose: &str, index: u64) -> StreamRng {
    let key = splitmix64(seed ^ splitmix64(fnv1a64(purpose.as_bytes()) ^ splitmix64(index)));
    ChaCha8Rng::seed_from_u64(key)
}
