//! Index sets over the statistics `1..=n`, stored as bitmasks.
//!
//! Bit `i` (zero based) stands for statistic `i + 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of statistics a problem may carry.
pub const MAX_STATISTICS: usize = 16;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubsetMask(pub u32);

impl SubsetMask {
    pub const EMPTY: SubsetMask = SubsetMask(0);

    /// The full set `K = {1, .., n}`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_STATISTICS);
        SubsetMask(((1u64 << n) - 1) as u32)
    }

    pub fn singleton(i: usize) -> Self {
        SubsetMask(1 << i)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        SubsetMask(indices.into_iter().fold(0, |acc, i| acc | (1 << i)))
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn is_subset_of(self, other: SubsetMask) -> bool {
        self.0 & other.0 == self.0
    }

    pub fn union(self, other: SubsetMask) -> Self {
        SubsetMask(self.0 | other.0)
    }

    pub fn without(self, i: usize) -> Self {
        SubsetMask(self.0 & !(1 << i))
    }

    pub fn with(self, i: usize) -> Self {
        SubsetMask(self.0 | (1 << i))
    }

    /// Zero-based member indices in increasing order.
    pub fn indices(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |i| bits >> i & 1 == 1)
    }

    /// All subsets of `self`, in increasing bit order.
    pub fn subsets(self) -> impl Iterator<Item = SubsetMask> {
        let full = self.0;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                // next submask in increasing numeric order
                Some(((cur | !full).wrapping_add(1)) & full)
            };
            Some(SubsetMask(cur))
        })
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for SubsetMask {
    /// One-based set notation, e.g. `{1,2}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.indices().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

/// Every subset of `{1..n}` in increasing bit order.
pub fn enumerate_subsets(n: usize) -> Result<Vec<SubsetMask>> {
    if n > MAX_STATISTICS {
        return Err(Error::InstanceTooLarge(format!(
            "{n} statistics exceeds the limit of {MAX_STATISTICS}"
        )));
    }
    Ok((0..(1u32 << n)).map(SubsetMask).collect())
}
