//! Load-factor-driven resizing by linear hashing.
//!
//! Expansion splits `K` buckets per step starting at the split pointer; each
//! source `b` is paired with a fresh partner `b + 2^m` and entries whose next
//! hash bit selects the partner move there, compacted to its lowest slots.
//! Contraction merges partners back, newest first, and aborts a pair whose
//! base bucket lacks room. Both run only while no other operation is in
//! flight, which `&mut self` enforces; the pairs inside one batch are
//! disjoint and are processed in parallel.
//!
//! The split pointer is kept in `[0, 2^m)`: a finished round advances the
//! mask immediately, and contraction re-opens the previous round only when
//! it needs to merge below it.

use std::sync::atomic::Ordering;

use crate::hashing::{bithash1, bithash2};
use crate::lane_group::{ballot, prefix_rank, select_nth_one, LaneVector, FULL_MASK};
use crate::ops::InsertKind;
use crate::packed_kv::{is_empty, unpack_key, PackedEntry, EMPTY};
use crate::par;
use crate::table::{Bucket, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResizeAction {
    None,
    Expand,
    Contract,
}

/// Source/partner pairs of one expansion step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    /// Round level `m`; every pair satisfies `dst == src + 2^m`.
    pub round_level: u32,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Fate {
    Empty,
    Stay,
    Move,
    Stray,
}

/// Per-pair result of a split.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SplitOutcome {
    pub moved: usize,
    /// Entries whose residence matched neither hash under the old mask.
    /// They are removed from the source and must be reinserted.
    pub orphans: Vec<PackedEntry>,
}

/// Entries handled while draining the stash.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReinsertReport {
    pub drained: usize,
    /// Landed in a bucket.
    pub placed: usize,
    pub restashed: usize,
    /// Could not be stored at all; the caller owns them now.
    pub pending: Vec<PackedEntry>,
}

/// Summary of one expand or contract batch.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResizeReport {
    /// `(base, partner)` pairs that were split or merged.
    pub pairs: Vec<(usize, usize)>,
    pub moved: usize,
    pub orphans: usize,
    /// A merge found too little room and stopped the batch.
    pub aborted: bool,
    pub stash: ReinsertReport,
}

impl ResizeReport {
    pub fn progressed(&self) -> bool {
        !self.pairs.is_empty()
    }
}

impl Table {
    /// The action the current load factor calls for. Does nothing itself.
    pub fn maybe_resize(&self) -> ResizeAction {
        let lf = self.load_factor();
        let cfg = self.config();
        if lf > cfg.grow_threshold {
            ResizeAction::Expand
        } else if lf < cfg.shrink_threshold && self.n_buckets() > self.meta.min_buckets {
            ResizeAction::Contract
        } else {
            ResizeAction::None
        }
    }

    /// Pairs the next expansion step of up to `k` buckets would split.
    pub fn split_plan(&self, k: usize) -> SplitPlan {
        let a = self.addressing();
        let round = a.round_size();
        let start = a.split_ptr() as usize;
        let end = (start + k).min(round);
        SplitPlan {
            round_level: round.trailing_zeros(),
            pairs: (start..end).map(|s| (s, s + round)).collect(),
        }
    }

    /// Splits `b_src` into its freshly allocated partner `b_dst = b_src + 2^m`.
    pub fn split_pair(&mut self, b_src: usize, b_dst: usize, m: u32) -> SplitOutcome {
        self.split_pair_shared(b_src, b_dst, m)
    }

    fn split_pair_shared(&self, b_src: usize, b_dst: usize, m: u32) -> SplitOutcome {
        let mask = ((1u64 << m) - 1) as u32;
        let next_mask = (mask << 1) | 1;
        debug_assert_eq!(b_dst, b_src + (1usize << m));
        let src_b = b_src as u32;
        let dst_b = b_dst as u32;

        let kv = LaneVector::from_fn(|lane| self.slot_load(b_src, lane));
        let fate = kv.map(|_, &w| {
            if is_empty(w) {
                return Fate::Empty;
            }
            // The residence hash is h1 if it addresses the source under the
            // old mask, else h2.
            let k = unpack_key(w);
            let h = [bithash1(k), bithash2(k)]
                .into_iter()
                .find(|h| h & mask == src_b);
            match h {
                Some(h) if h & next_mask == dst_b => Fate::Move,
                Some(_) => Fate::Stay,
                None => Fate::Stray,
            }
        });
        let move_mask = ballot(&fate.map(|_, &f| f == Fate::Move));
        let orphan_mask = ballot(&fate.map(|_, &f| f == Fate::Stray));

        let mut out = SplitOutcome::default();
        for lane in move_mask.iter() {
            let rank = prefix_rank(move_mask, lane) as usize;
            self.buckets[b_dst].slots_raw()[rank].store(kv[lane], Ordering::Relaxed);
            self.buckets[b_src].slots_raw()[lane].store(EMPTY, Ordering::Relaxed);
        }
        for lane in orphan_mask.iter() {
            out.orphans.extend(PackedEntry::from_word(kv[lane]));
            self.buckets[b_src].slots_raw()[lane].store(EMPTY, Ordering::Relaxed);
        }
        let n_movers = move_mask.count();
        out.moved = n_movers as usize;
        self.free_mask[b_src].fetch_or(move_mask.bits() | orphan_mask.bits(), Ordering::Relaxed);
        let used = ((1u64 << n_movers) - 1) as u32;
        self.free_mask[b_dst].fetch_and(!used, Ordering::Relaxed);
        if !out.orphans.is_empty() {
            self.occupied
                .fetch_sub(out.orphans.len(), Ordering::Relaxed);
        }
        out
    }

    /// Merges partner `b_src = b_dst + 2^m` into `b_dst`. Returns false and
    /// changes nothing when `b_dst` has fewer free slots than `b_src` has
    /// entries.
    pub fn merge_pair(&mut self, b_dst: usize, b_src: usize, m: u32) -> bool {
        debug_assert_eq!(b_src, b_dst + (1usize << m));
        self.merge_pair_shared(b_dst, b_src).is_some()
    }

    fn merge_fits(&self, b_dst: usize, b_src: usize) -> bool {
        let live = ballot(&LaneVector::from_fn(|lane| {
            !is_empty(self.slot_load(b_src, lane))
        }));
        live.count() <= self.free_mask(b_dst).count()
    }

    /// Number of entries moved, or `None` on abort.
    fn merge_pair_shared(&self, b_dst: usize, b_src: usize) -> Option<usize> {
        let kv = LaneVector::from_fn(|lane| self.slot_load(b_src, lane));
        let occ_mask = ballot(&kv.map(|_, &w| !is_empty(w)));
        let dst_free = self.free_mask(b_dst);
        if occ_mask.count() > dst_free.count() {
            return None;
        }
        let mut used = 0u32;
        for lane in occ_mask.iter() {
            let rank = prefix_rank(occ_mask, lane);
            let pos = select_nth_one(dst_free, rank).expect("room checked above");
            self.buckets[b_dst].slots_raw()[pos].store(kv[lane], Ordering::Relaxed);
            self.buckets[b_src].slots_raw()[lane].store(EMPTY, Ordering::Relaxed);
            used |= 1 << pos;
        }
        self.free_mask[b_src].store(FULL_MASK, Ordering::Relaxed);
        self.free_mask[b_dst].fetch_and(!used, Ordering::Relaxed);
        Some(occ_mask.count() as usize)
    }

    /// Splits up to `k` buckets from the split pointer (not past the end of
    /// the round), then reinserts orphans and the stash.
    pub fn expand_batch(&mut self, k: usize) -> ResizeReport {
        let plan = self.split_plan(k);
        let mut report = ResizeReport::default();
        if plan.pairs.is_empty() {
            return report;
        }
        let count = plan.pairs.len();
        self.grow_arrays(count);

        let results = par::map_slice(&plan.pairs, |&(s, d)| {
            self.split_pair_shared(s, d, plan.round_level)
        });

        let a = &mut self.meta.addressing;
        a.set_split(a.split_ptr() + count as u32);
        if a.split_ptr() as usize == a.round_size() {
            a.advance_round();
        }

        let mut orphans = Vec::new();
        for r in results {
            report.moved += r.moved;
            orphans.extend(r.orphans);
        }
        report.orphans = orphans.len();
        report.pairs = plan.pairs;
        report.stash = self.reinsert_stash();
        self.reinsert_into(&orphans, &mut report.stash);
        report
    }

    /// Merges up to `k` partner pairs, newest first. A pair without room
    /// stops the batch with the split pointer left above it.
    pub fn contract_batch(&mut self, k: usize) -> ResizeReport {
        let mut report = ResizeReport::default();
        let mut merged = 0;
        while merged < k {
            if self.addressing().split_ptr() == 0 {
                if self.addressing().round_size() <= self.meta.min_buckets {
                    break;
                }
                self.meta.addressing.regress_round();
            }
            let a = *self.addressing();
            let round = a.round_size();
            let sp = a.split_ptr() as usize;
            let count = (k - merged).min(sp);
            let pairs: Vec<(usize, usize)> =
                (sp - count..sp).rev().map(|d| (d, d + round)).collect();
            let fits = par::map_slice(&pairs, |&(d, s)| self.merge_fits(d, s));
            let ok = fits.iter().take_while(|&&f| f).count();
            let done = &pairs[..ok];
            let moved = par::map_slice(done, |&(d, s)| self.merge_pair_shared(d, s));
            report.moved += moved
                .into_iter()
                .map(|m| m.expect("fit checked before merging"))
                .sum::<usize>();
            self.shrink_arrays(ok);
            self.meta.addressing.set_split((sp - ok) as u32);
            merged += ok;
            report.pairs.extend_from_slice(done);
            if ok < count {
                report.aborted = true;
                break;
            }
        }
        let a = &mut self.meta.addressing;
        if a.split_ptr() as usize == a.round_size() {
            a.advance_round();
        }
        report.stash = self.reinsert_stash();
        report
    }

    /// Drains the stash and runs every entry through the four-step insert.
    pub fn reinsert_stash(&mut self) -> ReinsertReport {
        let drained = self.stash_drain();
        let mut report = ReinsertReport {
            drained: drained.len(),
            ..ReinsertReport::default()
        };
        self.reinsert_into(&drained, &mut report);
        report
    }

    fn reinsert_into(&self, entries: &[PackedEntry], report: &mut ReinsertReport) {
        for &e in entries {
            match self.insert_entry(e).kind {
                InsertKind::ClaimedSlot | InsertKind::PlacedViaEviction { .. } => {
                    report.placed += 1
                }
                InsertKind::Stashed => report.restashed += 1,
                InsertKind::FailedPending(p) => report.pending.push(p),
                InsertKind::ReplacedExisting => {
                    debug_assert!(false, "duplicate key {} during reinsertion", e.key())
                }
            }
        }
    }

    /// Runs expand or contract batches until the load factor is inside the
    /// thresholds or a batch makes no progress.
    pub fn rebalance(&mut self) -> Vec<(ResizeAction, ResizeReport)> {
        let k = self.config().batch_k;
        let mut log = Vec::new();
        loop {
            let action = self.maybe_resize();
            let report = match action {
                ResizeAction::None => break,
                ResizeAction::Expand => self.expand_batch(k),
                ResizeAction::Contract => self.contract_batch(k),
            };
            let progressed = report.progressed();
            log.push((action, report));
            if !progressed {
                break;
            }
        }
        log
    }

    fn grow_arrays(&mut self, count: usize) {
        self.buckets.extend((0..count).map(|_| Bucket::new()));
        self.free_mask
            .extend((0..count).map(|_| std::sync::atomic::AtomicU32::new(FULL_MASK)));
        self.locks
            .extend((0..count).map(|_| std::sync::atomic::AtomicBool::new(false)));
    }

    fn shrink_arrays(&mut self, count: usize) {
        let n = self.buckets.len() - count;
        debug_assert!(self.buckets[n..].iter().all(|b| b
            .slots_raw()
            .iter()
            .all(|s| s.load(Ordering::Relaxed) == EMPTY)));
        self.buckets.truncate(n);
        self.free_mask.truncate(n);
        self.locks.truncate(n);
    }
}
