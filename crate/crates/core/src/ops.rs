//! Insert, lookup and delete, written as lane-group protocols.
//!
//! Insert runs four steps and stops at the first that succeeds:
//!
//! 1. replace the value if the key already sits in a candidate bucket
//!    (match-and-elect, one CAS),
//! 2. claim a free slot with the bucket's bitmask (one `fetch_and`, one
//!    store),
//! 3. bounded cuckoo eviction starting at the first candidate,
//! 4. push whatever entry is still in hand onto the overflow stash.
//!
//! Lookup and delete scan both candidates with match-and-elect and fall back
//! to the stash.

use std::time::{Duration, Instant};

use crate::hashing::{alt_of, candidate_buckets};
use crate::lane_group::{ballot, broadcast, first_set, LaneMask, LaneVector, FULL_MASK};
use crate::packed_kv::{pack, unpack_key, Key, PackedEntry, EMPTY};
use crate::table::Table;

/// Step-1 attempts before a contended key moves on to Step 2.
pub const REPLACE_ATTEMPTS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InsertKind {
    ReplacedExisting,
    ClaimedSlot,
    /// Placed during Step 3 after `rounds` eviction rounds.
    PlacedViaEviction {
        rounds: u32,
    },
    Stashed,
    /// Stash full. The carried entry (the caller's pair or a displaced
    /// victim) is not stored anywhere and must be reinserted by the caller.
    FailedPending(PackedEntry),
}

impl InsertKind {
    pub fn is_success(&self) -> bool {
        !matches!(self, InsertKind::FailedPending(_))
    }
}

/// Wall time spent in each of the four insert steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepTimings(pub [Duration; 4]);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsertOutcome {
    pub kind: InsertKind,
    /// Step 3 was entered.
    pub entered_step3: bool,
    /// Step-3 rounds executed (0 if Step 3 was not reached).
    pub rounds: u32,
    /// Bucket locks taken in Step 3.
    pub lock_acquisitions: u32,
    pub step_timings: Option<StepTimings>,
}

/// Aggregated insert statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounters {
    pub step1_hits: u64,
    pub step2_hits: u64,
    pub step3_entries: u64,
    pub step3_successes: u64,
    pub step3_rounds_total: u64,
    pub step4_hits: u64,
    pub failed_pending: u64,
    pub lock_acquisitions: u64,
    pub inserts: u64,
    /// Accumulated time per step over sampled inserts.
    pub step_time: [Duration; 4],
    pub timed_samples: u64,
}

impl StepCounters {
    pub fn record(&mut self, o: &InsertOutcome) {
        self.inserts += 1;
        match o.kind {
            InsertKind::ReplacedExisting => self.step1_hits += 1,
            InsertKind::ClaimedSlot => self.step2_hits += 1,
            InsertKind::PlacedViaEviction { .. } => self.step3_successes += 1,
            InsertKind::Stashed => self.step4_hits += 1,
            InsertKind::FailedPending(_) => self.failed_pending += 1,
        }
        self.step3_entries += o.entered_step3 as u64;
        self.step3_rounds_total += o.rounds as u64;
        self.lock_acquisitions += o.lock_acquisitions as u64;
        if let Some(t) = o.step_timings {
            self.timed_samples += 1;
            for (acc, d) in self.step_time.iter_mut().zip(t.0) {
                *acc += d;
            }
        }
    }

    pub fn merge(&mut self, other: &StepCounters) {
        self.step1_hits += other.step1_hits;
        self.step2_hits += other.step2_hits;
        self.step3_entries += other.step3_entries;
        self.step3_successes += other.step3_successes;
        self.step3_rounds_total += other.step3_rounds_total;
        self.step4_hits += other.step4_hits;
        self.failed_pending += other.failed_pending;
        self.lock_acquisitions += other.lock_acquisitions;
        self.inserts += other.inserts;
        self.timed_samples += other.timed_samples;
        for (a, b) in self.step_time.iter_mut().zip(other.step_time) {
            *a += b;
        }
    }

    pub fn successful_inserts(&self) -> u64 {
        self.step1_hits + self.step2_hits + self.step3_successes + self.step4_hits
    }

    /// `step1 + step2 + step3_successes + step4 == inserts - failed`.
    pub fn is_consistent(&self) -> bool {
        self.successful_inserts() + self.failed_pending == self.inserts
            && self.step3_successes + self.step4_hits + self.failed_pending == self.step3_entries
    }
}

/// Result of one match-and-elect replace attempt on a bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplaceResult {
    NoMatch,
    Replaced,
    /// A matching slot changed between the gather and the CAS.
    Lost,
}

/// What one locked eviction round did.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundOutcome {
    PlacedWithoutEvict,
    Evicted {
        slot: usize,
        victim: PackedEntry,
    },
    /// Lost a race inside the critical section; nothing changed.
    Retry,
}

/// How a Step-3 call ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvictionEnd {
    /// Lock-free claim succeeded at the start of a round.
    FastPath,
    /// A free bit was found under the bucket lock.
    PlacedWithoutEvict,
    /// Round bound hit; `in_hand` still needs a home.
    Exhausted,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvictionReport {
    pub end: EvictionEnd,
    pub rounds: u32,
    pub evictions: u32,
    pub lock_acquisitions: u32,
    /// On `Exhausted`, the entry that was displaced last and is homeless.
    pub in_hand: PackedEntry,
}

impl EvictionReport {
    pub fn placed(&self) -> bool {
        self.end != EvictionEnd::Exhausted
    }
}

#[inline]
fn distinct((a, b): (usize, usize)) -> ([usize; 2], usize) {
    ([a, b], if a == b { 1 } else { 2 })
}

struct StepClock {
    enabled: bool,
    last: Option<Instant>,
    spent: [Duration; 4],
}

impl StepClock {
    fn new(enabled: bool) -> Self {
        StepClock {
            enabled,
            last: enabled.then(Instant::now),
            spent: [Duration::ZERO; 4],
        }
    }

    #[inline]
    fn lap(&mut self, step: usize) {
        if let Some(t0) = self.last {
            let now = Instant::now();
            self.spent[step] += now - t0;
            self.last = Some(now);
        }
    }

    fn finish(self) -> Option<StepTimings> {
        self.enabled.then_some(StepTimings(self.spent))
    }
}

impl Table {
    /// Each lane loads one slot; ballot on key equality.
    #[inline]
    fn match_lanes(&self, b: usize, k: Key) -> (LaneVector<u64>, LaneMask) {
        let cached = LaneVector::from_fn(|lane| self.slot_load(b, lane));
        let matches = cached.map(|_, &w| unpack_key(w) == k.get());
        (cached, ballot(&matches))
    }

    /// Match-and-elect replace on bucket `b`.
    pub fn replace_scan(&self, b: usize, k: Key, v: u32) -> ReplaceResult {
        let (cached, m) = self.match_lanes(b, k);
        let Some(winner) = first_set(m) else {
            return ReplaceResult::NoMatch;
        };
        let old = broadcast(&cached, winner);
        if self.slot_cas(b, winner, old, pack(k, v).word()) {
            ReplaceResult::Replaced
        } else {
            ReplaceResult::Lost
        }
    }

    /// True iff `k` was found in bucket `b` and its value swapped to `v`.
    pub fn replace_path(&self, b: usize, k: Key, v: u32) -> bool {
        self.replace_scan(b, k, v) == ReplaceResult::Replaced
    }

    /// Bitmask claim of the lowest free slot in `b`, then publish `e`.
    /// Single attempt; `None` on a full bucket or a lost claim.
    pub fn claim_then_commit(&self, b: usize, e: PackedEntry) -> Option<usize> {
        // lane 0 loads, all lanes see the same word
        let mask = self.free_mask(b).bits() & FULL_MASK;
        if mask == 0 {
            return None;
        }
        let eligible = LaneVector::from_fn(|lane| mask & (1u32 << lane) != 0);
        let winner = first_set(ballot(&eligible))?;
        if self.claim_bit(b, winner) {
            self.slot_store(b, winner, e.word());
            Some(winner)
        } else {
            None
        }
    }

    /// The lock-holding half of an eviction round on bucket `b`.
    pub fn locked_round(&self, b: usize, kv: PackedEntry) -> RoundOutcome {
        self.lock_bucket(b);
        let fm = self.free_mask(b).bits() & FULL_MASK;
        let outcome = if let Some(s) = first_set(LaneMask(fm)) {
            if self.claim_bit(b, s) {
                self.slot_store(b, s, kv.word());
                RoundOutcome::PlacedWithoutEvict
            } else {
                RoundOutcome::Retry
            }
        } else {
            let s = first_set(LaneMask(!fm)).expect("full bucket has an occupied slot");
            let victim = self.slot_load_acquire(b, s);
            // An occupied bit over an EMPTY word is a claim not yet published
            // or a delete not yet released; leave it to its owner.
            match PackedEntry::from_word(victim) {
                Some(v) if self.slot_cas(b, s, victim, kv.word()) => {
                    RoundOutcome::Evicted { slot: s, victim: v }
                }
                _ => RoundOutcome::Retry,
            }
        };
        self.unlock_bucket(b);
        outcome
    }

    /// Bounded cuckoo displacement starting at bucket `b0`.
    pub fn cuckoo_evict_and_insert(&self, b0: usize, e0: PackedEntry) -> EvictionReport {
        let max = self.config().max_evictions;
        let addressing = *self.addressing();
        let mut kv = e0;
        let mut b = b0;
        let mut report = EvictionReport {
            end: EvictionEnd::Exhausted,
            rounds: 0,
            evictions: 0,
            lock_acquisitions: 0,
            in_hand: e0,
        };
        for round in 1..=max {
            report.rounds = round;
            if self.claim_then_commit(b, kv).is_some() {
                report.end = EvictionEnd::FastPath;
                return report;
            }
            report.lock_acquisitions += 1;
            match self.locked_round(b, kv) {
                RoundOutcome::PlacedWithoutEvict => {
                    report.end = EvictionEnd::PlacedWithoutEvict;
                    return report;
                }
                RoundOutcome::Evicted { victim, .. } => {
                    report.evictions += 1;
                    kv = victim;
                    b = alt_of(candidate_buckets(kv.key(), &addressing), b);
                }
                RoundOutcome::Retry => {}
            }
        }
        report.in_hand = kv;
        report
    }

    pub fn insert(&self, k: Key, v: u32) -> InsertOutcome {
        self.insert_inner(k, v, false)
    }

    /// Like [`insert`](Self::insert), also recording per-step wall time.
    pub fn insert_timed(&self, k: Key, v: u32) -> InsertOutcome {
        self.insert_inner(k, v, true)
    }

    fn insert_inner(&self, k: Key, v: u32, timed: bool) -> InsertOutcome {
        let mut clock = StepClock::new(timed);
        let (cands, n) = distinct(candidate_buckets(k, self.addressing()));
        let cands = &cands[..n];
        let mut outcome = InsertOutcome {
            kind: InsertKind::ReplacedExisting,
            entered_step3: false,
            rounds: 0,
            lock_acquisitions: 0,
            step_timings: None,
        };

        // Step 1: replace in place.
        let mut attempts = 0;
        loop {
            let mut lost = false;
            for &b in cands {
                match self.replace_scan(b, k, v) {
                    ReplaceResult::Replaced => {
                        clock.lap(0);
                        outcome.step_timings = clock.finish();
                        return outcome;
                    }
                    ReplaceResult::Lost => lost = true,
                    ReplaceResult::NoMatch => {}
                }
            }
            attempts += 1;
            if !lost || attempts >= REPLACE_ATTEMPTS {
                break;
            }
        }
        let entry = pack(k, v);
        if self.stash_replace(entry) {
            clock.lap(0);
            outcome.step_timings = clock.finish();
            return outcome;
        }
        clock.lap(0);

        // Step 2: claim then commit.
        for &b in cands {
            if self.claim_then_commit(b, entry).is_some() {
                clock.lap(1);
                outcome.kind = InsertKind::ClaimedSlot;
                outcome.step_timings = clock.finish();
                return outcome;
            }
        }
        clock.lap(1);

        // Step 3: bounded eviction from the first candidate.
        let ev = self.cuckoo_evict_and_insert(cands[0], entry);
        clock.lap(2);
        outcome.entered_step3 = true;
        outcome.rounds = ev.rounds;
        outcome.lock_acquisitions = ev.lock_acquisitions;
        if ev.placed() {
            outcome.kind = InsertKind::PlacedViaEviction { rounds: ev.rounds };
            outcome.step_timings = clock.finish();
            return outcome;
        }

        // Step 4: overflow stash.
        outcome.kind = if self.stash_push(ev.in_hand) {
            InsertKind::Stashed
        } else {
            InsertKind::FailedPending(ev.in_hand)
        };
        clock.lap(3);
        outcome.step_timings = clock.finish();
        outcome
    }

    /// Re-offers a packed entry through the four-step insert.
    pub fn insert_entry(&self, e: PackedEntry) -> InsertOutcome {
        let (k, v) = e.unpack();
        self.insert(k, v)
    }

    pub fn lookup(&self, k: Key) -> Option<u32> {
        let (cands, n) = distinct(candidate_buckets(k, self.addressing()));
        for &b in &cands[..n] {
            let (cached, m) = self.match_lanes(b, k);
            if let Some(w) = first_set(m) {
                return Some((broadcast(&cached, w) >> 32) as u32);
            }
        }
        self.stash_find(k)
    }

    /// Removes `k`. False if absent or if the winning CAS lost a race.
    pub fn delete(&self, k: Key) -> bool {
        let (cands, n) = distinct(candidate_buckets(k, self.addressing()));
        for &b in &cands[..n] {
            let (cached, m) = self.match_lanes(b, k);
            let Some(w) = first_set(m) else { continue };
            let old = broadcast(&cached, w);
            let ok = self.slot_cas(b, w, old, EMPTY);
            if ok {
                self.release_bit(b, w);
            }
            return ok;
        }
        self.stash_remove(k)
    }

    /// Bucket and slot currently holding `k`, if it is in a bucket.
    pub fn locate(&self, k: Key) -> Option<(usize, usize)> {
        let (cands, n) = distinct(candidate_buckets(k, self.addressing()));
        cands[..n]
            .iter()
            .find_map(|&b| first_set(self.match_lanes(b, k).1).map(|s| (b, s)))
    }
}
