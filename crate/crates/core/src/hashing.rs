//! Hash functions, linear-hashing bucket addressing, and the uniform-hashing
//! collision model used to grade hash quality.
//!
//! Hash functions return the full mixed 32-bit word. Reduction to a bucket
//! index happens only in [`bucket_index`], because a split needs the next
//! higher hash bit that a pre-reduced value would have discarded.

use std::fmt;
use std::str::FromStr;

use crate::packed_kv::Key;
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HashFn {
    BitHash1,
    BitHash2,
    Crc32,
}

impl HashFn {
    pub const ALL: [HashFn; 3] = [HashFn::BitHash1, HashFn::BitHash2, HashFn::Crc32];

    pub fn name(self) -> &'static str {
        match self {
            HashFn::BitHash1 => "bithash1",
            HashFn::BitHash2 => "bithash2",
            HashFn::Crc32 => "crc32",
        }
    }

    #[inline]
    pub fn hash(self, k: u32) -> u32 {
        match self {
            HashFn::BitHash1 => bithash1(k),
            HashFn::BitHash2 => bithash2(k),
            HashFn::Crc32 => crc32_key(k),
        }
    }
}

impl fmt::Display for HashFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HashFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bithash1" => Ok(HashFn::BitHash1),
            "bithash2" => Ok(HashFn::BitHash2),
            "crc32" => Ok(HashFn::Crc32),
            other => Err(format!("unknown hash function `{other}`")),
        }
    }
}

#[inline]
pub fn hash(f: HashFn, k: Key) -> u32 {
    f.hash(k.get())
}

#[inline]
pub fn bithash1(mut key: u32) -> u32 {
    key = (!key).wrapping_add(key << 15);
    key ^= key >> 12;
    key = key.wrapping_add(key << 2);
    key ^= key >> 4;
    key = key.wrapping_mul(2057);
    key ^= key >> 16;
    key
}

#[inline]
pub fn bithash2(mut key: u32) -> u32 {
    key = key.wrapping_add(0x7ed5_5d16).wrapping_add(key << 12);
    key = (key ^ 0xc761_c23c) ^ (key >> 19);
    key = key.wrapping_add(0x1656_67b1).wrapping_add(key << 5);
    key = key.wrapping_add(0xd3a2_646c) ^ (key << 9);
    key = key.wrapping_add(0xfd70_46c5).wrapping_add(key << 3);
    key = (key ^ 0xb55a_4f09) ^ (key >> 16);
    key
}

const CRC32_POLY: u32 = 0xEDB8_8320;

const fn crc32_table() -> [u32; 256] {
    let mut table = [0u32; 256];
    let mut i = 0;
    while i < 256 {
        let mut c = i as u32;
        let mut bit = 0;
        while bit < 8 {
            c = if c & 1 != 0 {
                CRC32_POLY ^ (c >> 1)
            } else {
                c >> 1
            };
            bit += 1;
        }
        table[i] = c;
        i += 1;
    }
    table
}

/// Reflected CRC-32 lookup table, built at compile time.
pub static CRC32_TABLE: [u32; 256] = crc32_table();

/// CRC-32 over the four little-endian bytes of `k`.
#[inline]
pub fn crc32_key(k: u32) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for byte in k.to_le_bytes() {
        crc = CRC32_TABLE[((crc ^ byte as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}

/// Linear-hashing addressing state: round mask `2^m - 1` and split pointer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressingState {
    index_mask: u32,
    split_ptr: u32,
}

impl AddressingState {
    /// Returns `None` unless `index_mask + 1` is a power of two and
    /// `split_ptr <= index_mask + 1`.
    pub fn new(index_mask: u32, split_ptr: u32) -> Option<Self> {
        let round = index_mask as u64 + 1;
        if !round.is_power_of_two() || split_ptr as u64 > round {
            return None;
        }
        Some(AddressingState {
            index_mask,
            split_ptr,
        })
    }

    /// Round start for a power-of-two bucket count.
    pub fn for_buckets(n_buckets: usize) -> Option<Self> {
        if !n_buckets.is_power_of_two() || n_buckets > 1 << 31 {
            return None;
        }
        Self::new((n_buckets - 1) as u32, 0)
    }

    #[inline]
    pub fn index_mask(&self) -> u32 {
        self.index_mask
    }

    #[inline]
    pub fn split_ptr(&self) -> u32 {
        self.split_ptr
    }

    /// Buckets addressable in the current round, `2^m`.
    #[inline]
    pub fn round_size(&self) -> usize {
        self.index_mask as usize + 1
    }

    /// Mask of the next round, `(index_mask << 1) | 1`.
    #[inline]
    pub fn next_mask(&self) -> u32 {
        (self.index_mask << 1) | 1
    }

    #[inline]
    pub fn n_buckets(&self) -> usize {
        self.round_size() + self.split_ptr as usize
    }

    /// Moves the split pointer by `delta` buckets within the current round.
    pub(crate) fn set_split(&mut self, split_ptr: u32) {
        debug_assert!(split_ptr as usize <= self.round_size());
        self.split_ptr = split_ptr;
    }

    /// Ends a fully split round: mask doubles, split pointer resets.
    pub(crate) fn advance_round(&mut self) {
        debug_assert_eq!(self.split_ptr as usize, self.round_size());
        self.index_mask = self.next_mask();
        self.split_ptr = 0;
    }

    /// Re-opens the previous round with every bucket still split.
    pub(crate) fn regress_round(&mut self) {
        debug_assert_eq!(self.split_ptr, 0);
        self.index_mask >>= 1;
        self.split_ptr = self.index_mask + 1;
    }
}

/// Masks the hash into the current round, re-masking with the next round's
/// mask when the bucket has already been split.
#[inline]
pub fn bucket_index(h: u32, s: &AddressingState) -> usize {
    let b = h & s.index_mask;
    if b < s.split_ptr {
        (h & s.next_mask()) as usize
    } else {
        b as usize
    }
}

#[inline]
pub fn candidate_buckets(k: Key, s: &AddressingState) -> (usize, usize) {
    (
        bucket_index(bithash1(k.get()), s),
        bucket_index(bithash2(k.get()), s),
    )
}

/// The other candidate of `k`. Equal candidates yield `current`; a bucket
/// that is no longer a candidate (stale after a resize) yields the first.
#[inline]
pub fn alt_bucket(k: Key, current: usize, s: &AddressingState) -> usize {
    alt_of(candidate_buckets(k, s), current)
}

#[inline]
pub(crate) fn alt_of((c1, c2): (usize, usize), current: usize) -> usize {
    // A key that sits in neither candidate moves to its first.
    if current == c1 {
        c2
    } else {
        c1
    }
}

/// Closed-form statistics for `n` keys thrown uniformly into `m` bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelStats {
    pub n: u64,
    pub m: u64,
    pub lambda: f64,
    /// `n - m(1 - (1 - 1/m)^n)`
    pub expected_collisions: f64,
    /// Probability a given key shares its bin: `1 - (1 - 1/m)^(n-1)`.
    pub collision_probability: f64,
    /// Poisson approximation `m e^-lambda`.
    pub expected_empty: f64,
    /// Exact `m (1 - 1/m)^n`.
    pub expected_empty_exact: f64,
    /// Sparse-regime approximation `n^2 / 2m`.
    pub approx_collisions: f64,
}

/// `(1 - 1/m)^e` without catastrophic cancellation for large `m`.
fn miss_power(m: u64, e: u64) -> f64 {
    if e == 0 {
        return 1.0;
    }
    if m == 1 {
        return 0.0;
    }
    ((e as f64) * (-1.0 / m as f64).ln_1p()).exp()
}

pub fn uniform_model(n: u64, m: u64) -> ModelStats {
    assert!(m >= 1, "bin count must be at least 1");
    let mf = m as f64;
    let nf = n as f64;
    let stay_empty = miss_power(m, n);
    let expected_collisions = (nf - mf * (1.0 - stay_empty)).max(0.0);
    let collision_probability = if n == 0 {
        0.0
    } else {
        (1.0 - miss_power(m, n - 1)).clamp(0.0, 1.0)
    };
    let lambda = nf / mf;
    ModelStats {
        n,
        m,
        lambda,
        expected_collisions,
        collision_probability,
        expected_empty: mf * (-lambda).exp(),
        expected_empty_exact: mf * stay_empty,
        approx_collisions: nf * nf / (2.0 * mf),
    }
}

/// `Y = sum_b max(load_b - 1, 0)` from per-bin loads.
pub fn collisions_from_loads(loads: &[u32]) -> u64 {
    loads.iter().map(|&l| l.saturating_sub(1) as u64).sum()
}

/// Bins `keys` by `hash(f, k) mod m` and counts collisions.
pub fn observed_collisions(keys: &[Key], f: HashFn, m: u64) -> u64 {
    assert!(m >= 1, "bin count must be at least 1");
    let loads = par::histogram(keys, m as usize, |k| (f.hash(k.get()) as u64 % m) as usize);
    collisions_from_loads(&loads)
}

/// Expected over observed collisions; `+inf` when nothing collided but
/// something was expected.
pub fn csr(expected: f64, observed: u64) -> f64 {
    if observed == 0 {
        if expected > 0.0 {
            f64::INFINITY
        } else {
            1.0
        }
    } else {
        expected / observed as f64
    }
}
