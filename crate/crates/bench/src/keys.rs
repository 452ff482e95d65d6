//! Deterministic key generation.
//!
//! All randomness in the harness comes from SplitMix64 (a 64-bit
//! add-then-mix generator), seeded directly from the user-supplied seed, so a
//! seed fully determines every key sequence and op schedule.

use std::collections::HashSet;

use lanecuckoo::Key;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::BenchError;

/// Largest usable key space: every `u32` except the reserved empty key.
pub const FULL_KEY_SPACE: u64 = u32::MAX as u64;

/// Spaces up to this size are enumerated and shuffled when at least half of
/// the space is requested.
const DENSE_LIMIT: u64 = 1 << 26;

pub fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Derives an independent stream seed (e.g. per worker) from a base seed.
pub fn substream(seed: u64, index: u64) -> u64 {
    let mut r = rng(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    r.gen()
}

/// `n` distinct keys drawn uniformly from `[0, key_space)`.
pub fn gen_keys(n: usize, seed: u64, key_space: u64) -> Result<Vec<Key>, BenchError> {
    if key_space == 0 || key_space > FULL_KEY_SPACE {
        return Err(BenchError::Config(format!(
            "key space {key_space} must lie in [1, {FULL_KEY_SPACE}]"
        )));
    }
    if n as u64 > key_space {
        return Err(BenchError::Config(format!(
            "cannot draw {n} distinct keys from a space of {key_space}"
        )));
    }
    let mut r = rng(seed);
    let raw: Vec<u32> = if key_space <= DENSE_LIMIT && 2 * n as u64 >= key_space {
        let mut all: Vec<u32> = (0..key_space as u32).collect();
        let (picked, _) = all.partial_shuffle(&mut r, n);
        picked.to_vec()
    } else {
        let mut seen = HashSet::with_capacity(n);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let k = r.gen_range(0..key_space) as u32;
            if seen.insert(k) {
                out.push(k);
            }
        }
        out
    };
    Ok(raw.into_iter().map(Key::must).collect())
}
