//! Shared table storage: bucket slots, per-bucket free masks and locks,
//! global metadata, and the overflow stash.
//!
//! Every mutation the protocols perform is a single-word atomic on one of
//! these arrays. Slot words and free masks are kept in separate arrays so a
//! claim touches only the 32-bit mask and a probe touches only the slots.

use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, AtomicUsize, Ordering};

use crate::error::TableError;
use crate::hashing::AddressingState;
use crate::lane_group::{LaneMask, LANES};
use crate::packed_kv::{is_empty, unpack_key, Key, PackedEntry, EMPTY};
use crate::par;

/// Slots per bucket.
pub const SLOTS: usize = LANES;

const MIN_STASH: usize = 1024;

/// One bucket: 32 packed slots, 256 bytes.
#[repr(C, align(128))]
pub struct Bucket {
    slots: [AtomicU64; SLOTS],
}

impl Bucket {
    pub(crate) fn new() -> Self {
        Bucket {
            slots: std::array::from_fn(|_| AtomicU64::new(EMPTY)),
        }
    }

    #[inline]
    pub(crate) fn slots_raw(&self) -> &[AtomicU64; SLOTS] {
        &self.slots
    }
}

/// Tunables supplied at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TableConfig {
    /// Upper bound on cuckoo displacement rounds per insert.
    pub max_evictions: u32,
    pub grow_threshold: f64,
    pub shrink_threshold: f64,
    /// Buckets split or merged per resize step.
    pub batch_k: usize,
    /// Stash capacity as a fraction of total slots (floored at 1024 entries).
    pub stash_fraction: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            max_evictions: 16,
            grow_threshold: 0.9,
            shrink_threshold: 0.25,
            batch_k: 1024,
            stash_fraction: 0.02,
        }
    }
}

impl TableConfig {
    pub fn validate(&self) -> Result<(), TableError> {
        if self.max_evictions < 1 {
            return Err(TableError::Config(
                "max_evictions must be at least 1".into(),
            ));
        }
        if !(0.0 < self.shrink_threshold
            && self.shrink_threshold < self.grow_threshold
            && self.grow_threshold < 1.0)
        {
            return Err(TableError::Config(format!(
                "thresholds must satisfy 0 < shrink ({}) < grow ({}) < 1",
                self.shrink_threshold, self.grow_threshold
            )));
        }
        if self.batch_k == 0 {
            return Err(TableError::Config("batch_k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.stash_fraction) {
            return Err(TableError::Config(format!(
                "stash_fraction {} must lie in [0, 1)",
                self.stash_fraction
            )));
        }
        Ok(())
    }
}

/// Global table metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct TableMeta {
    pub config: TableConfig,
    pub addressing: AddressingState,
    /// Contraction never goes below this.
    pub min_buckets: usize,
}

impl TableMeta {
    #[inline]
    pub fn n_buckets(&self) -> usize {
        self.addressing.n_buckets()
    }

    #[inline]
    pub fn slots_per_bucket(&self) -> usize {
        SLOTS
    }
}

/// Bounded ring of packed entries. `tail - head` is the reserved region;
/// removed entries leave `EMPTY` holes until the next drain.
pub struct StashRing {
    entries: Box<[AtomicU64]>,
    head: AtomicU64,
    tail: AtomicU64,
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl StashRing {
    fn with_capacity(capacity: usize) -> Self {
        StashRing {
            entries: (0..capacity).map(|_| AtomicU64::new(EMPTY)).collect(),
            head: AtomicU64::new(0),
            tail: AtomicU64::new(0),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.entries.len()
    }

    /// Reserved ring positions, including holes.
    pub fn reserved(&self) -> usize {
        (self.tail.load(Ordering::Acquire) - self.head.load(Ordering::Relaxed)) as usize
    }

    /// Live (non-hole) entries.
    pub fn len(&self) -> usize {
        self.live.load(Ordering::Relaxed)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Highest live count seen since construction or the last reset.
    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    pub fn reset_peak(&self) {
        self.peak.store(self.len(), Ordering::Relaxed);
    }

    #[inline]
    fn slot(&self, pos: u64) -> &AtomicU64 {
        &self.entries[(pos % self.entries.len() as u64) as usize]
    }

    fn live_region(&self) -> std::ops::Range<u64> {
        self.head.load(Ordering::Acquire)..self.tail.load(Ordering::Acquire)
    }
}


#[cfg(test)]
macro_rules! tally {
    ($field:ident) => {
        crate::table::tally::bump(|t| t.$field += 1)
    };
}
#[cfg(not(test))]
macro_rules! tally {
    ($field:ident) => {};
}

pub struct Table {
    pub(crate) buckets: Vec<Bucket>,
    pub(crate) free_mask: Vec<AtomicU32>,
    pub(crate) locks: Vec<AtomicBool>,
    pub(crate) meta: TableMeta,
    pub(crate) stash: StashRing,
    pub(crate) occupied: AtomicUsize,
}

impl Table {
    /// Builds an empty table of `initial_buckets` buckets (a power of two, at
    /// least 2). That count is also the contraction floor.
    pub fn new(initial_buckets: usize, config: TableConfig) -> Result<Self, TableError> {
        config.validate()?;
        if initial_buckets < 2 || !initial_buckets.is_power_of_two() {
            return Err(TableError::BucketCount(initial_buckets));
        }
        let addressing = AddressingState::for_buckets(initial_buckets)
            .ok_or(TableError::BucketCount(initial_buckets))?;
        let slots = initial_buckets * SLOTS;
        let stash_cap = MIN_STASH.max((config.stash_fraction * slots as f64).round() as usize);
        Ok(Table {
            buckets: (0..initial_buckets).map(|_| Bucket::new()).collect(),
            free_mask: (0..initial_buckets)
                .map(|_| AtomicU32::new(u32::MAX))
                .collect(),
            locks: (0..initial_buckets)
                .map(|_| AtomicBool::new(false))
                .collect(),
            meta: TableMeta {
                config,
                addressing,
                min_buckets: initial_buckets,
            },
            stash: StashRing::with_capacity(stash_cap),
            occupied: AtomicUsize::new(0),
        })
    }

    #[inline]
    pub fn meta(&self) -> &TableMeta {
        &self.meta
    }

    #[inline]
    pub fn config(&self) -> &TableConfig {
        &self.meta.config
    }

    #[inline]
    pub fn addressing(&self) -> &AddressingState {
        &self.meta.addressing
    }

    #[inline]
    pub fn n_buckets(&self) -> usize {
        self.meta.n_buckets()
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.n_buckets() * SLOTS
    }

    pub fn stash(&self) -> &StashRing {
        &self.stash
    }

    /// Occupied bucket slots (stash excluded).
    #[inline]
    pub fn occupied_slots(&self) -> usize {
        self.occupied.load(Ordering::Relaxed)
    }

    /// Occupied slots over total slots. Exact at quiescence.
    pub fn load_factor(&self) -> f64 {
        self.occupied_slots() as f64 / self.capacity() as f64
    }

    // ---- slot words -------------------------------------------------------

    /// Unordered probe load.
    #[inline]
    pub fn slot_load(&self, b: usize, slot: usize) -> u64 {
        self.buckets[b].slots[slot].load(Ordering::Relaxed)
    }

    #[inline]
    pub(crate) fn slot_load_acquire(&self, b: usize, slot: usize) -> u64 {
        self.buckets[b].slots[slot].load(Ordering::Acquire)
    }

    /// Publishes a word into a slot the caller owns.
    #[inline]
    pub(crate) fn slot_store(&self, b: usize, slot: usize, word: u64) {
        tally!(slot_store);
        self.buckets[b].slots[slot].store(word, Ordering::Release);
    }

    /// 64-bit compare-exchange on one slot; true iff swapped.
    #[inline]
    pub fn slot_cas(&self, b: usize, slot: usize, expected: u64, new: u64) -> bool {
        debug_assert!(slot < SLOTS);
        tally!(slot_cas);
        self.buckets[b].slots[slot]
            .compare_exchange(expected, new, Ordering::AcqRel, Ordering::Relaxed)
            .is_ok()
    }

    /// All 32 slot words of a bucket, one unordered load per lane.
    pub fn bucket_words(&self, b: usize) -> [u64; SLOTS] {
        std::array::from_fn(|slot| self.slot_load(b, slot))
    }

    // ---- free masks -------------------------------------------------------

    #[inline]
    pub fn free_mask(&self, b: usize) -> LaneMask {
        LaneMask(self.free_mask[b].load(Ordering::Relaxed))
    }

    /// Clears `slot`'s free bit. True iff this call took ownership.
    ///
    /// A lost claim means the bit was already clear, so the `fetch_and` left
    /// the mask as it was and there is nothing to restore. Setting the bit
    /// back would mark another owner's slot free.
    pub fn claim_bit(&self, b: usize, slot: usize) -> bool {
        debug_assert!(slot < SLOTS);
        let bit = 1u32 << slot;
        tally!(mask_rmw);
        let old = self.free_mask[b].fetch_and(!bit, Ordering::AcqRel);
        if old & bit != 0 {
            self.occupied.fetch_add(1, Ordering::Relaxed);
            true
        } else {
            false
        }
    }

    /// Marks `slot` free after its word was retired to `EMPTY`.
    pub fn release_bit(&self, b: usize, slot: usize) {
        let bit = 1u32 << slot;
        tally!(mask_rmw);
        let old = self.free_mask[b].fetch_or(bit, Ordering::AcqRel);
        debug_assert!(old & bit == 0, "double release of bucket {b} slot {slot}");
        self.occupied.fetch_sub(1, Ordering::Relaxed);
    }

    // ---- bucket locks -----------------------------------------------------

    pub fn lock_bucket(&self, b: usize) {
        let lock = &self.locks[b];
        while lock
            .compare_exchange_weak(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_err()
        {
            while lock.load(Ordering::Relaxed) {
                std::hint::spin_loop();
            }
        }
    }

    pub fn unlock_bucket(&self, b: usize) {
        self.locks[b].store(false, Ordering::Release);
    }

    pub fn is_locked(&self, b: usize) -> bool {
        self.locks[b].load(Ordering::Relaxed)
    }

    // ---- stash --------------------------------------------------------------

    /// Appends to the stash. False when full; the entry is not stored.
    pub fn stash_push(&self, e: PackedEntry) -> bool {
        let ring = &self.stash;
        let cap = ring.capacity() as u64;
        let mut tail = ring.tail.load(Ordering::Acquire);
        loop {
            let head = ring.head.load(Ordering::Relaxed);
            if tail - head >= cap {
                return false;
            }
            match ring.tail.compare_exchange_weak(
                tail,
                tail + 1,
                Ordering::AcqRel,
                Ordering::Acquire,
            ) {
                Ok(_) => break,
                Err(t) => tail = t,
            }
        }
        ring.slot(tail).store(e.word(), Ordering::Release);
        let live = ring.live.fetch_add(1, Ordering::Relaxed) + 1;
        ring.peak.fetch_max(live, Ordering::Relaxed);
        true
    }

    fn stash_position(&self, k: Key) -> Option<(u64, u64)> {
        let ring = &self.stash;
        ring.live_region().find_map(|pos| {
            let w = ring.slot(pos).load(Ordering::Acquire);
            (!is_empty(w) && unpack_key(w) == k.get()).then_some((pos, w))
        })
    }

    pub fn stash_find(&self, k: Key) -> Option<u32> {
        if self.stash.is_empty() {
            return None;
        }
        self.stash_position(k).map(|(_, w)| (w >> 32) as u32)
    }

    /// Clears the first stashed entry for `k`. True iff one was removed.
    pub fn stash_remove(&self, k: Key) -> bool {
        if self.stash.is_empty() {
            return false;
        }
        match self.stash_position(k) {
            Some((pos, w)) => {
                let ok = self
                    .stash
                    .slot(pos)
                    .compare_exchange(w, EMPTY, Ordering::AcqRel, Ordering::Relaxed)
                    .is_ok();
                if ok {
                    self.stash.live.fetch_sub(1, Ordering::Relaxed);
                }
                ok
            }
            None => false,
        }
    }

    /// Replaces the value of a stashed key in place.
    pub(crate) fn stash_replace(&self, e: PackedEntry) -> bool {
        if self.stash.is_empty() {
            return false;
        }
        match self.stash_position(e.key()) {
            Some((pos, w)) => self
                .stash
                .slot(pos)
                .compare_exchange(w, e.word(), Ordering::AcqRel, Ordering::Relaxed)
                .is_ok(),
            None => false,
        }
    }

    /// Empties the stash, returning its live entries in ring order.
    pub fn stash_drain(&mut self) -> Vec<PackedEntry> {
        let ring = &mut self.stash;
        let head = *ring.head.get_mut();
        let tail = *ring.tail.get_mut();
        let cap = ring.entries.len() as u64;
        let mut out = Vec::with_capacity((tail - head) as usize);
        for pos in head..tail {
            let w = std::mem::replace(ring.entries[(pos % cap) as usize].get_mut(), EMPTY);
            out.extend(PackedEntry::from_word(w));
        }
        *ring.head.get_mut() = tail;
        *ring.live.get_mut() = 0;
        out
    }

    // ---- diagnostics --------------------------------------------------------

    /// Live entries in buckets plus stash, by full scan.
    pub fn count_entries(&self) -> usize {
        self.count_bucket_entries() + self.count_stash_entries()
    }

    pub fn count_bucket_entries(&self) -> usize {
        par::sum_indices(self.n_buckets(), |b| {
            (0..SLOTS)
                .filter(|&s| !is_empty(self.slot_load(b, s)))
                .count() as u64
        }) as usize
    }

    fn count_stash_entries(&self) -> usize {
        self.stash
            .live_region()
            .filter(|&pos| !is_empty(self.stash.slot(pos).load(Ordering::Acquire)))
            .count()
    }

    /// All live `(key, value)` pairs, buckets then stash, sorted.
    pub fn entries(&self) -> Vec<(Key, u32)> {
        let mut out: Vec<(Key, u32)> = par::map_indices(self.n_buckets(), |b| self.bucket_words(b))
            .into_iter()
            .flatten()
            .filter_map(PackedEntry::from_word)
            .chain(self.stash_entries())
            .map(PackedEntry::unpack)
            .collect();
        out.sort_unstable();
        out
    }

    pub fn stash_entries(&self) -> Vec<PackedEntry> {
        self.stash
            .live_region()
            .filter_map(|pos| PackedEntry::from_word(self.stash.slot(pos).load(Ordering::Acquire)))
            .collect()
    }

    /// Checks the quiescent invariants: free bit set iff slot empty, no lock
    /// held, occupancy and stash counters equal to scans.
    pub fn check_consistency(&self) -> Result<(), String> {
        let bad: Vec<String> = par::map_indices(self.n_buckets(), |b| {
            let mask = self.free_mask(b).bits();
            let words = self.bucket_words(b);
            let mut errs = Vec::new();
            for (slot, &w) in words.iter().enumerate() {
                let free = mask & (1 << slot) != 0;
                if free != is_empty(w) {
                    errs.push(format!(
                        "bucket {b} slot {slot}: free bit {} but word {w:#018x}",
                        free as u8
                    ));
                }
            }
            if self.is_locked(b) {
                errs.push(format!("bucket {b} lock held at quiescence"));
            }
            errs
        })
        .into_iter()
        .flatten()
        .collect();
        if let Some(first) = bad.first() {
            return Err(format!("{} violations, first: {first}", bad.len()));
        }
        let scanned = self.count_bucket_entries();
        if scanned != self.occupied_slots() {
            return Err(format!(
                "occupancy counter {} != scanned {scanned}",
                self.occupied_slots()
            ));
        }
        let stash_scan = self.count_stash_entries();
        if stash_scan != self.stash.len() {
            return Err(format!(
                "stash counter {} != scanned {stash_scan}",
                self.stash.len()
            ));
        }
        if self.stash.reserved() > self.stash.capacity() {
            return Err("stash over capacity".into());
        }
        Ok(())
    }
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table")
            .field("n_buckets", &self.n_buckets())
            .field("addressing", self.addressing())
            .field("occupied", &self.occupied_slots())
            .field("stash_live", &self.stash.len())
            .finish()
    }
}
