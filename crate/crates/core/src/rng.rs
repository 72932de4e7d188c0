//! Counter-keyed random streams.
//!
//! Every random quantity in the crate is drawn from a stream identified by a
//! top-level seed plus a tuple of integer keys (subject index, interval,
//! channel, iteration, ...). Streams are independent of the order in which
//! they are requested, so parallel work produces the same numbers regardless
//! of how it is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Channel tags used as the last key component when a single
/// (subject, interval) cell needs several independent draws.
pub mod channel {
    pub const BASELINE: u64 = 1;
    pub const OUTCOME: u64 = 2;
    pub const CONFOUNDER: u64 = 3;
    pub const TREATMENT: u64 = 4;
    pub const RANDOM_EFFECT: u64 = 5;
    pub const NOISE_PANEL: u64 = 6;
    pub const SENSITIVITY: u64 = 7;
    pub const SAMPLER: u64 = 8;
    pub const REPLICATE: u64 = 9;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a seed and a key path into a single 64-bit value.
pub fn derive_key(seed: u64, keys: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for (pos, &k) in keys.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(k.wrapping_add((pos as u64 + 1).wrapping_mul(0xa076_1d64_78bd_642f))));
    }
    h
}

/// A ChaCha stream keyed by `(seed, keys...)`.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let k0 = derive_key(seed, keys);
    let mut bytes = [0u8; 32];
    let mut h = k0;
    for chunk in bytes.chunks_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
