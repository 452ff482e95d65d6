//! 64-bit packed key/value words.
//!
//! A slot holds `(value << 32) | key` so that a whole pair is published or
//! retired with a single 64-bit atomic. The all-ones word is the empty
//! sentinel, which makes key `0xFFFF_FFFF` unrepresentable.

use std::fmt;

use crate::error::TableError;

/// Sentinel for an unoccupied slot.
pub const EMPTY: u64 = u64::MAX;

/// The key that would collide with [`EMPTY`] when paired with value `u32::MAX`.
pub const RESERVED_KEY: u32 = u32::MAX;

/// A 32-bit key. Every value except [`RESERVED_KEY`] is valid, including 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(u32);

impl Key {
    pub fn new(k: u32) -> Result<Self, TableError> {
        if k == RESERVED_KEY {
            Err(TableError::ReservedKey)
        } else {
            Ok(Key(k))
        }
    }

    /// # Panics
    /// Panics on [`RESERVED_KEY`].
    #[track_caller]
    pub fn must(k: u32) -> Self {
        Self::new(k).expect("key 0xFFFFFFFF is reserved for the empty sentinel")
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<u32> for Key {
    type Error = TableError;

    fn try_from(k: u32) -> Result<Self, Self::Error> {
        Key::new(k)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A packed `(key, value)` word. Never equal to [`EMPTY`] when built via [`pack`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PackedEntry(u64);

impl PackedEntry {
    /// Wraps a raw slot word. Returns `None` for the empty sentinel.
    #[inline]
    pub fn from_word(word: u64) -> Option<Self> {
        if is_empty(word) {
            None
        } else {
            Some(PackedEntry(word))
        }
    }

    #[inline]
    pub fn word(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn key(self) -> Key {
        Key(unpack_key(self.0))
    }

    #[inline]
    pub fn value(self) -> u32 {
        (self.0 >> 32) as u32
    }

    #[inline]
    pub fn unpack(self) -> (Key, u32) {
        (self.key(), self.value())
    }
}

impl fmt::Debug for PackedEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "PackedEntry({:#018x}: k={} v={})",
            self.0,
            self.key(),
            self.value()
        )
    }
}

#[inline]
pub fn pack(k: Key, v: u32) -> PackedEntry {
    PackedEntry(((v as u64) << 32) | k.0 as u64)
}

/// Key half of a raw word. Total, also on [`EMPTY`] (yields [`RESERVED_KEY`]).
#[inline]
pub fn unpack_key(word: u64) -> u32 {
    (word & 0xFFFF_FFFF) as u32
}

/// Splits a non-empty word into `(key, value)`.
#[inline]
pub fn unpack(e: PackedEntry) -> (Key, u32) {
    e.unpack()
}

#[inline]
pub fn is_empty(word: u64) -> bool {
    word == EMPTY
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    #[test]
    fn pack_examples() {
        assert_eq!(pack(Key::must(1), 2).word(), 0x0000_0002_0000_0001);
        assert_eq!(pack(Key::must(0), 0).word(), 0);
        assert_eq!(
            pack(Key::must(0xFFFF_FFFE), 0xFFFF_FFFF).word(),
            0xFFFF_FFFF_FFFF_FFFE
        );
    }

    #[test]
    fn unpack_examples() {
        let e = PackedEntry::from_word(0x0000_0002_0000_0001).unwrap();
        assert_eq!(unpack(e), (Key::must(1), 2));
        assert_eq!(
            unpack(PackedEntry::from_word(0).unwrap()),
            (Key::must(0), 0)
        );
        let e = PackedEntry::from_word(0x0000_0001_FFFF_FFFE).unwrap();
        assert_eq!(unpack(e), (Key::must(0xFFFF_FFFE), 1));
    }

    #[test]
    fn empty_classification() {
        assert!(is_empty(0xFFFF_FFFF_FFFF_FFFF));
        assert!(!is_empty(0));
        assert!(!is_empty(pack(Key::must(1), 2).word()));
        assert!(PackedEntry::from_word(EMPTY).is_none());
    }

    #[test]
    fn reserved_key_rejected() {
        assert_eq!(Key::new(u32::MAX), Err(TableError::ReservedKey));
        assert!(Key::try_from(0u32).is_ok());
    }

    #[test]
    fn million_pairs_round_trip_and_injective() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut seen = HashSet::with_capacity(1 << 20);
        let mut inputs = HashSet::with_capacity(1 << 20);
        while inputs.len() < 1_000_000 {
            let k: u32 = rng.gen_range(0..u32::MAX);
            let v: u32 = rng.gen();
            if !inputs.insert((k, v)) {
                continue;
            }
            let e = pack(Key::must(k), v);
            assert!(!is_empty(e.word()));
            assert_eq!(unpack(e), (Key::must(k), v));
            assert!(seen.insert(e.word()));
        }
    }

    proptest! {
        #[test]
        fn round_trip(k in 0u32..u32::MAX, v in any::<u32>()) {
            let e = pack(Key::must(k), v);
            prop_assert_eq!(unpack(e), (Key::must(k), v));
            prop_assert!(!is_empty(e.word()));
        }
    }
}
