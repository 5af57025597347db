//! Decision rules `b(X_J, J)` stored densely over every `(J, X_J)` pair,
//! optionally with one slice per analyst signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Layout, PartialOutcome};
use crate::subset::SubsetMask;

#[derive(Debug, Clone, PartialEq)]
pub struct TestRuleTable {
    layout: Layout,
    /// `None` when the rule ignores the signal; otherwise the signal ids,
    /// one slice each.
    signals: Option<Vec<usize>>,
    slices: Vec<Vec<f64>>,
}

impl TestRuleTable {
    /// Rule without a signal dimension.
    pub fn new(layout: Layout, values: Vec<f64>) -> Result<Self> {
        Self::check_slice(&layout, &values)?;
        Ok(TestRuleTable { layout, signals: None, slices: vec![values] })
    }

    /// Rule with one slice per signal id.
    pub fn with_signals(layout: Layout, signals: Vec<usize>, slices: Vec<Vec<f64>>) -> Result<Self> {
        if signals.len() != slices.len() || signals.is_empty() {
            return Err(Error::IncompleteRule("one slice per signal is required".into()));
        }
        for s in &slices {
            Self::check_slice(&layout, s)?;
        }
        Ok(TestRuleTable { layout, signals: Some(signals), slices })
    }

    pub fn constant(layout: Layout, value: f64) -> Result<Self> {
        let v = vec![value; layout.total()];
        Self::new(layout, v)
    }

    /// Builds `b` from any function of `(J, coordinates)`.
    pub fn from_fn(layout: Layout, mut f: impl FnMut(SubsetMask, &[usize]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; layout.total()];
        for m in 0..layout.num_masks() as u32 {
            let mask = SubsetMask(m);
            let off = layout.offset(mask);
            let mut cells = layout.mask_cells(mask);
            while let Some((k, coords)) = cells.next() {
                values[off + k] = f(mask, coords);
            }
        }
        Self::new(layout, values)
    }

    fn check_slice(layout: &Layout, values: &[f64]) -> Result<()> {
        if values.len() != layout.total() {
            return Err(Error::IncompleteRule(format!(
                "rule has {} entries, the grid needs {}",
                values.len(),
                layout.total()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Model(format!("rule value {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn signals(&self) -> Option<&[usize]> {
        self.signals.as_deref()
    }

    pub fn has_signal_dimension(&self) -> bool {
        self.signals.is_some()
    }

    pub fn num_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn slice_signal(&self, k: usize) -> Option<usize> {
        self.signals.as_ref().map(|s| s[k])
    }

    /// Values used when the analyst has signal `signal`.
    pub fn slice(&self, signal: usize) -> Result<&[f64]> {
        match &self.signals {
            None => Ok(&self.slices[0]),
            Some(ids) => ids
                .iter()
                .position(|&s| s == signal)
                .map(|k| self.slices[k].as_slice())
                .ok_or_else(|| Error::IncompleteRule(format!("rule has no slice for signal {signal}"))),
        }
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }

    /// Rule value at a partial outcome.
    pub fn value(&self, signal: usize, outcome: &PartialOutcome) -> Result<f64> {
        let slot = self.layout.slot_of(outcome)?;
        Ok(self.slice(signal)?[slot])
    }

    /// Rule value at the restriction of full coordinates `coords` to `mask`.
    #[inline]
    pub fn value_at(&self, slice: &[f64], mask: SubsetMask, coords: &[usize]) -> f64 {
        slice[self.layout.slot(mask, coords)]
    }

    /// The `J = K` slice, i.e. the full-data test `t(X)`.
    pub fn full_data(&self, signal: usize) -> Result<&[f64]> {
        let r = self.layout.range(self.layout.full_mask());
        Ok(&self.slice(signal)?[r])
    }

    pub fn into_values(self) -> Vec<Vec<f64>> {
        self.slices
    }

    pub fn to_json(&self) -> RuleJson {
        let mut entries = Vec::with_capacity(self.layout.total() * self.slices.len());
        for (k, slice) in self.slices.iter().enumerate() {
            let signal = self.slice_signal(k);
            for m in 0..self.layout.num_masks() as u32 {
                let mask = SubsetMask(m);
                let off = self.layout.offset(mask);
                for p in 0..self.layout.mask_len(mask) {
                    entries.push(RuleEntry {
                        signal,
                        mask: m,
                        x: self.layout.partial_outcome(mask, p).indices,
                        value: slice[off + p],
                    });
                }
            }
        }
        RuleJson {
            signals: self.signals.clone().unwrap_or_default(),
            sizes: Some(self.layout.sizes().to_vec()),
            entries,
        }
    }

    /// Parses the entry list; every `(signal, J, X_J)` must be present once.
    pub fn from_json(json: &RuleJson, layout: Layout) -> Result<Self> {
        if let Some(sizes) = &json.sizes {
            if sizes.as_slice() != layout.sizes() {
                return Err(Error::IncompleteRule(format!(
                    "rule grid {sizes:?} does not match problem grid {:?}",
                    layout.sizes()
                )));
            }
        }
        let signals = (!json.signals.is_empty()).then(|| json.signals.clone());
        let nslices = signals.as_ref().map_or(1, Vec::len);
        let mut slices = vec![vec![f64::NAN; layout.total()]; nslices];
        for e in &json.entries {
            let k = match (&signals, e.signal) {
                (None, None) => 0,
                (Some(ids), Some(s)) => ids.iter().position(|&i| i == s).ok_or_else(|| {
                    Error::IncompleteRule(format!("entry for undeclared signal {s}"))
                })?,
                (None, Some(s)) => {
                    return Err(Error::IncompleteRule(format!(
                        "entry carries signal {s} but the rule declares no signals"
                    )))
                }
                (Some(_), None) => {
                    return Err(Error::IncompleteRule("entry is missing its signal".into()))
                }
            };
            let outcome = PartialOutcome { mask: SubsetMask(e.mask), indices: e.x.clone() };
            let slot = layout.slot_of(&outcome).map_err(|err| Error::IncompleteRule(err.to_string()))?;
            if !slices[k][slot].is_nan() {
                return Err(Error::IncompleteRule(format!(
                    "duplicate entry for mask {} at {:?}",
                    e.mask, e.x
                )));
            }
            slices[k][slot] = e.value;
        }
        for (k, s) in slices.iter().enumerate() {
            if let Some(slot) = s.iter().position(|v| v.is_nan()) {
                let (mask, p) = locate_slot(&layout, slot);
                return Err(Error::IncompleteRule(format!(
                    "missing entry for slice {k}, mask {}, x {:?}",
                    mask.bits(),
                    layout.partial_outcome(mask, p).indices
                )));
            }
        }
        match signals {
            None => Self::new(layout, slices.pop().expect("one slice")),
            Some(ids) => Self::with_signals(layout, ids, slices),
        }
    }
}

fn locate_slot(layout: &Layout, slot: usize) -> (SubsetMask, usize) {
    for m in 0..layout.num_masks() as u32 {
        let r = layout.range(SubsetMask(m));
        if r.contains(&slot) {
            return (SubsetMask(m), slot - r.start);
        }
    }
    unreachable!("slot inside layout")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<usize>,
    pub mask: u32,
    pub x: Vec<usize>,
    pub value: f64,
}

/// Wire format of a [`TestRuleTable`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleJson {
    #[serde(default)]
    pub signals: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    pub entries: Vec<RuleEntry>,
}
