//! Lockstep 32-lane group primitives.
//!
//! One worker evaluates all 32 lanes of a group together, so the per-lane
//! values live in a [`LaneVector`] and the warp-wide collectives (ballot,
//! election, prefix rank, shuffle) are plain functions over it. There is no
//! divergence: every lane always observes the same collective result.

use std::ops::Index;

/// Lanes per group. Equal to the slot count of a bucket.
pub const LANES: usize = 32;

/// All lanes active.
pub const FULL_MASK: u32 = 0xFFFF_FFFF;

/// One bit per lane; bit `i` is lane `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct LaneMask(pub u32);

impl LaneMask {
    pub const NONE: LaneMask = LaneMask(0);
    pub const ALL: LaneMask = LaneMask(FULL_MASK);

    #[inline]
    pub fn bits(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn contains(self, lane: usize) -> bool {
        debug_assert!(lane < LANES);
        self.0 & (1u32 << lane) != 0
    }

    #[inline]
    pub fn count(self) -> u32 {
        self.0.count_ones()
    }

    /// Set lanes in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut m = self.0;
        std::iter::from_fn(move || {
            if m == 0 {
                None
            } else {
                let lane = m.trailing_zeros() as usize;
                m &= m - 1;
                Some(lane)
            }
        })
    }
}

/// Exactly one value per lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaneVector<T>(pub [T; LANES]);

impl<T> LaneVector<T> {
    /// Evaluates `f(lane)` on every lane.
    #[inline]
    pub fn from_fn(f: impl FnMut(usize) -> T) -> Self {
        LaneVector(std::array::from_fn(f))
    }

    #[inline]
    pub fn map<U>(&self, mut f: impl FnMut(usize, &T) -> U) -> LaneVector<U> {
        LaneVector::from_fn(|lane| f(lane, &self.0[lane]))
    }
}

impl<T> Index<usize> for LaneVector<T> {
    type Output = T;

    fn index(&self, lane: usize) -> &T {
        &self.0[lane]
    }
}

#[inline]
pub fn ballot(preds: &LaneVector<bool>) -> LaneMask {
    let mut bits = 0u32;
    for (lane, &p) in preds.0.iter().enumerate() {
        bits |= (p as u32) << lane;
    }
    LaneMask(bits)
}

/// Lowest set lane, the election winner.
#[inline]
pub fn first_set(mask: LaneMask) -> Option<usize> {
    if mask.0 == 0 {
        None
    } else {
        Some(mask.0.trailing_zeros() as usize)
    }
}

/// Number of set lanes strictly below `lane`.
#[inline]
pub fn prefix_rank(mask: LaneMask, lane: usize) -> u32 {
    debug_assert!(lane < LANES);
    let below = (1u64 << lane) as u32;
    (mask.0 & below.wrapping_sub(1)).count_ones()
}

/// Position of the `(r+1)`-th set bit counting from bit 0.
#[inline]
pub fn select_nth_one(mask: LaneMask, r: u32) -> Option<usize> {
    if r >= mask.0.count_ones() {
        return None;
    }
    let mut m = mask.0;
    for _ in 0..r {
        m &= m - 1;
    }
    Some(m.trailing_zeros() as usize)
}

/// Every lane reads lane `src`'s value.
#[inline]
pub fn broadcast<T: Copy>(vals: &LaneVector<T>, src: usize) -> T {
    vals.0[src]
}
