//! Rectangular discretization of the statistics and the dense indexing
//! scheme shared by cell tables, priors and rule tables.
//!
//! A partial outcome on mask `J` is addressed by a row-major index over the
//! grid sizes of the coordinates in `J` (highest coordinate fastest). All
//! partial tables for all masks are concatenated in mask order, so a single
//! `Vec<f64>` of length `Layout::total()` holds one value per `(J, X_J)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::{SubsetMask, MAX_STATISTICS};

/// One statistic's cells. The outermost edges are clamps: probability
/// beyond them belongs to the outermost cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    edges: Vec<f64>,
    mids: Vec<f64>,
}

impl Axis {
    pub fn from_edges(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::Model("an axis needs at least two edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::Model("axis edges must be finite".into()));
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model("axis edges must be strictly increasing".into()));
        }
        let mids = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        Ok(Axis { edges, mids })
    }

    /// `cells` equal-width cells on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if cells == 0 || !(lo < hi) {
            return Err(Error::Model("uniform axis needs lo < hi and cells > 0".into()));
        }
        let w = (hi - lo) / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|k| lo + w * k as f64).collect();
        edges[cells] = hi;
        Self::from_edges(edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mids(&self) -> &[f64] {
        &self.mids
    }

    pub fn len(&self) -> usize {
        self.mids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mids.is_empty()
    }

    /// Cell containing `x`, with the tails folded into the outer cells.
    pub fn locate(&self, x: f64) -> usize {
        let inner = &self.edges[1..self.edges.len() - 1];
        inner.partition_point(|&e| e <= x)
    }

    /// Lower and upper cell bounds with the outer clamps opened to infinity.
    pub fn open_bounds(&self, cell: usize) -> (f64, f64) {
        let lo = if cell == 0 { f64::NEG_INFINITY } else { self.edges[cell] };
        let hi = if cell + 1 == self.len() { f64::INFINITY } else { self.edges[cell + 1] };
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.len() > MAX_STATISTICS {
            return Err(Error::InstanceTooLarge(format!(
                "{} statistics exceeds the limit of {MAX_STATISTICS}",
                axes.len()
            )));
        }
        Ok(Grid { axes })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.sizes())
    }

    /// Grid index of every coordinate of `x`.
    pub fn locate(&self, x: &[f64]) -> OutcomePoint {
        OutcomePoint(self.axes.iter().zip(x).map(|(a, &v)| a.locate(v)).collect())
    }
}

/// Full outcome: one grid index per statistic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutcomePoint(pub Vec<usize>);

impl OutcomePoint {
    pub fn restrict(&self, mask: SubsetMask) -> PartialOutcome {
        PartialOutcome {
            mask,
            indices: mask.indices().map(|i| self.0[i]).collect(),
        }
    }
}

/// Outcome on the coordinates of `mask` only, listed in increasing
/// coordinate order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartialOutcome {
    pub mask: SubsetMask,
    pub indices: Vec<usize>,
}

impl PartialOutcome {
    /// Restriction to a subset `sub` of this outcome's mask.
    pub fn restrict(&self, sub: SubsetMask) -> Result<PartialOutcome> {
        if !sub.is_subset_of(self.mask) {
            return Err(Error::Usage(format!("{sub} is not a subset of {}", self.mask)));
        }
        let indices = self
            .mask
            .indices()
            .zip(&self.indices)
            .filter(|(i, _)| sub.contains(*i))
            .map(|(_, &v)| v)
            .collect();
        Ok(PartialOutcome { mask: sub, indices })
    }
}

/// Dense addressing of `(J, X_J)` pairs for a fixed grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    /// `strides[mask][i]`: stride of coordinate `i` inside mask `mask`
    /// (zero when `i` is not in the mask).
    strides: Vec<Vec<usize>>,
}

impl Layout {
    pub fn new(sizes: Vec<usize>) -> Self {
        let n = sizes.len();
        let masks = 1usize << n;
        let mut offsets = Vec::with_capacity(masks + 1);
        let mut strides = Vec::with_capacity(masks);
        let mut total = 0;
        for m in 0..masks {
            offsets.push(total);
            let mut s = vec![0; n];
            let mut acc = 1;
            for i in (0..n).rev() {
                if m >> i & 1 == 1 {
                    s[i] = acc;
                    acc *= sizes[i];
                }
            }
            strides.push(s);
            total += acc;
        }
        offsets.push(total);
        Layout { sizes, offsets, strides }
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn full_mask(&self) -> SubsetMask {
        SubsetMask::full(self.dim())
    }

    pub fn num_masks(&self) -> usize {
        1 << self.dim()
    }

    /// Number of entries over all masks.
    pub fn total(&self) -> usize {
        self.offsets[self.num_masks()]
    }

    /// Number of partial outcomes on `mask`.
    pub fn mask_len(&self, mask: SubsetMask) -> usize {
        self.offsets[mask.index() + 1] - self.offsets[mask.index()]
    }

    pub fn full_len(&self) -> usize {
        self.mask_len(self.full_mask())
    }

    pub fn offset(&self, mask: SubsetMask) -> usize {
        self.offsets[mask.index()]
    }

    /// Slice range of `mask` inside a layout-indexed vector.
    pub fn range(&self, mask: SubsetMask) -> std::ops::Range<usize> {
        self.offsets[mask.index()]..self.offsets[mask.index() + 1]
    }

    /// Partial index on `mask` of the full outcome with coordinates `coords`.
    #[inline]
    pub fn project(&self, mask: SubsetMask, coords: &[usize]) -> usize {
        let s = &self.strides[mask.index()];
        coords.iter().zip(s).map(|(c, s)| c * s).sum()
    }

    /// Layout slot of the restriction of `coords` to `mask`.
    #[inline]
    pub fn slot(&self, mask: SubsetMask, coords: &[usize]) -> usize {
        self.offsets[mask.index()] + self.project(mask, coords)
    }

    pub fn slot_of(&self, p: &PartialOutcome) -> Result<usize> {
        let members: Vec<usize> = p.mask.indices().collect();
        if members.len() != p.indices.len() || p.mask.index() >= self.num_masks() {
            return Err(Error::Usage("partial outcome does not match its mask".into()));
        }
        let mut coords = vec![0; self.dim()];
        for (&i, &v) in members.iter().zip(&p.indices) {
            if v >= self.sizes[i] {
                return Err(Error::Usage(format!(
                    "index {v} out of range for statistic {}",
                    i + 1
                )));
            }
            coords[i] = v;
        }
        Ok(self.slot(p.mask, &coords))
    }

    /// Full coordinates (zero outside `mask`) of the `k`-th partial outcome on `mask`.
    pub fn partial_coords(&self, mask: SubsetMask, mut k: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dim()];
        for i in mask.indices().collect::<Vec<_>>().into_iter().rev() {
            coords[i] = k % self.sizes[i];
            k /= self.sizes[i];
        }
        coords
    }

    pub fn partial_outcome(&self, mask: SubsetMask, k: usize) -> PartialOutcome {
        let coords = self.partial_coords(mask, k);
        PartialOutcome { mask, indices: mask.indices().map(|i| coords[i]).collect() }
    }

    /// Odometer over the full outcomes in index order.
    pub fn full_cells(&self) -> CellIter<'_> {
        CellIter { sizes: &self.sizes, coords: vec![0; self.dim()], index: 0, len: self.full_len() }
    }

    /// Odometer over the partial outcomes of `mask`, in index order; the
    /// yielded coordinates are zero outside the mask.
    pub fn mask_cells(&self, mask: SubsetMask) -> MaskCellIter<'_> {
        MaskCellIter {
            sizes: &self.sizes,
            members: mask.indices().collect(),
            coords: vec![0; self.dim()],
            index: 0,
            len: self.mask_len(mask),
        }
    }

    /// Marginal of a full-cell table onto `mask`.
    pub fn marginal(&self, full: &[f64], mask: SubsetMask) -> Vec<f64> {
        let mut out = vec![0.0; self.mask_len(mask)];
        let mut cells = self.full_cells();
        while let Some((k, coords)) = cells.next() {
            out[self.project(mask, coords)] += full[k];
        }
        out
    }

    /// Marginals onto every mask, concatenated in layout order.
    pub fn all_marginals(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total()];
        let masks: Vec<SubsetMask> = (0..self.num_masks() as u32).map(SubsetMask).collect();
        let mut cells = self.full_cells();
        while let Some((k, coords)) = cells.next() {
            let p = full[k];
            if p == 0.0 {
                continue;
            }
            for &m in &masks {
                out[self.slot(m, coords)] += p;
            }
        }
        out
    }
}

pub struct CellIter<'a> {
    sizes: &'a [usize],
    coords: Vec<usize>,
    index: usize,
    len: usize,
}

impl CellIter<'_> {
    /// Lending-style step; returns the full index and coordinates.
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<(usize, &[usize])> {
        if self.index >= self.len {
            return None;
        }
        if self.index > 0 {
            for i in (0..self.sizes.len()).rev() {
                self.coords[i] += 1;
                if self.coords[i] < self.sizes[i] {
                    break;
                }
                self.coords[i] = 0;
            }
        }
        let k = self.index;
        self.index += 1;
        Some((k, &self.coords))
    }
}

pub struct MaskCellIter<'a> {
    sizes: &'a [usize],
    members: Vec<usize>,
    coords: Vec<usize>,
    index: usize,
    len: usize,
}

impl MaskCellIter<'_> {
    #[allow(clippy::should_implement_trait)]
    pub fn next(&mut self) -> Option<(usize, &[usize])> {
        if self.index >= self.len {
            return None;
        }
        if self.index > 0 {
            for &i in self.members.iter().rev() {
                self.coords[i] += 1;
                if self.coords[i] < self.sizes[i] {
                    break;
                }
                self.coords[i] = 0;
            }
        }
        let k = self.index;
        self.index += 1;
        Some((k, &self.coords))
    }
}
