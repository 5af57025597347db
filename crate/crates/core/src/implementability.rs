//! Checks of the implementability conditions (monotonicity in the reported
//! set, truthful pre-analysis messages), size control, and the worst-case
//! completion of a pre-registered full-data test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Layout, OutcomePoint};
use crate::lp::interim_expected_power;
use crate::model::{DiscreteProblem, InterimPrior};
use crate::rule::TestRuleTable;
use crate::subset::SubsetMask;

pub const DEFAULT_TOL: f64 = 1e-9;

/// Witness lists are truncated to this many entries; the total count is kept.
pub const MAX_WITNESSES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViolationKind {
    Monotonicity,
    TruthfulMessage,
    Size,
    Support,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal: Option<usize>,
    /// The misreported signal `π'` for truthful-message violations.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_signal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub available: Option<SubsetMask>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reported: Option<SubsetMask>,
    /// Grid indices on the coordinates of `available`.
    pub x: Vec<usize>,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`; negative for a violation.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub kind: ViolationKind,
    pub tolerance: f64,
    pub witnesses: Vec<Witness>,
    pub total_violations: usize,
    /// Smallest `rhs - lhs` over every inequality checked.
    pub min_slack: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_signal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_mask: Option<SubsetMask>,
}

impl ViolationReport {
    fn new(kind: ViolationKind, tolerance: f64) -> Self {
        ViolationReport {
            kind,
            tolerance,
            witnesses: Vec::new(),
            total_violations: 0,
            min_slack: f64::INFINITY,
            max_size: None,
            argmax_signal: None,
            argmax_mask: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.total_violations == 0
    }

    /// Records `lhs <= rhs + tol`; `make` builds the witness on failure.
    fn record(&mut self, lhs: f64, rhs: f64, make: impl FnOnce(f64, f64, f64) -> Witness) {
        let slack = rhs - lhs;
        if slack < self.min_slack {
            self.min_slack = slack;
        }
        if lhs > rhs + self.tolerance {
            self.total_violations += 1;
            if self.witnesses.len() < MAX_WITNESSES {
                self.witnesses.push(make(lhs, rhs, slack));
            }
        }
    }
}

fn ensure_layout(rule: &TestRuleTable, problem: &DiscreteProblem) -> Result<()> {
    if rule.layout() != problem.layout() {
        return Err(Error::IncompleteRule(format!(
            "rule grid {:?} does not cover the problem grid {:?}",
            rule.layout().sizes(),
            problem.layout().sizes()
        )));
    }
    Ok(())
}

/// `b(π, X_I, I) <= b(π, X_J, J) + tol` for every signal slice, `X`, and
/// `I ⊆ J`. For a rule without signal dimension this is the condition for
/// implementability without a pre-analysis message.
pub fn check_monotonicity(
    rule: &TestRuleTable,
    problem: &DiscreteProblem,
    tol: f64,
) -> Result<ViolationReport> {
    ensure_layout(rule, problem)?;
    Ok(monotonicity_report(rule, tol))
}

pub(crate) fn monotonicity_report(rule: &TestRuleTable, tol: f64) -> ViolationReport {
    let layout = rule.layout();
    let mut report = ViolationReport::new(ViolationKind::Monotonicity, tol);
    for (k, slice) in rule.slices().iter().enumerate() {
        let signal = rule.slice_signal(k);
        for m in 0..layout.num_masks() as u32 {
            let j = SubsetMask(m);
            let off = layout.offset(j);
            let mut cells = layout.mask_cells(j);
            while let Some((p, coords)) = cells.next() {
                let upper = slice[off + p];
                for i in j.subsets().filter(|&i| i != j) {
                    let lower = slice[layout.slot(i, coords)];
                    report.record(lower, upper, |lhs, rhs, slack| Witness {
                        signal,
                        alt_signal: None,
                        available: Some(j),
                        reported: Some(i),
                        x: j.indices().map(|c| coords[c]).collect(),
                        lhs,
                        rhs,
                        slack,
                    });
                }
            }
        }
    }
    if report.min_slack == f64::INFINITY {
        report.min_slack = 0.0;
    }
    report
}

/// `E_π[b(π', ·)] <= E_π[b(π, ·)] + tol` for every prior `π` in the problem
/// and every signal slice `π'` of the rule.
pub fn check_truthful_message(
    rule: &TestRuleTable,
    problem: &DiscreteProblem,
    tol: f64,
) -> Result<ViolationReport> {
    ensure_layout(rule, problem)?;
    let signals: Vec<usize> = match rule.signals() {
        Some(s) => s.to_vec(),
        None => (0..problem.priors().len()).collect(),
    };
    for &s in &signals {
        problem.prior(s)?;
    }
    let mut report = ViolationReport::new(ViolationKind::TruthfulMessage, tol);
    for &truth in &signals {
        let prior = problem.prior(truth)?;
        let honest = expected_under(rule.slice(truth)?, prior);
        for &alt in signals.iter().filter(|&&s| s != truth) {
            let deviate = expected_under(rule.slice(alt)?, prior);
            report.record(deviate, honest, |lhs, rhs, slack| Witness {
                signal: Some(truth),
                alt_signal: Some(alt),
                available: None,
                reported: None,
                x: Vec::new(),
                lhs,
                rhs,
                slack,
            });
        }
        if signals.len() == 1 {
            report.min_slack = report.min_slack.min(0.0);
        }
    }
    if report.min_slack == f64::INFINITY {
        report.min_slack = 0.0;
    }
    Ok(report)
}

fn expected_under(slice: &[f64], prior: &InterimPrior) -> f64 {
    slice.iter().zip(&prior.table).map(|(b, p)| b * p).sum()
}

/// Conditional rejection rate under the null for every signal slice and
/// every `J`, compared against `alpha + tol`.
pub fn check_size_control(
    rule: &TestRuleTable,
    problem: &DiscreteProblem,
    alpha: f64,
    tol: f64,
) -> Result<ViolationReport> {
    ensure_layout(rule, problem)?;
    let layout = problem.layout();
    let null = problem.null_marginals();
    let mut report = ViolationReport::new(ViolationKind::Size, tol);
    let mut best: Option<(f64, Option<usize>, SubsetMask)> = None;
    for (k, slice) in rule.slices().iter().enumerate() {
        let signal = rule.slice_signal(k);
        for m in 0..layout.num_masks() as u32 {
            let j = SubsetMask(m);
            let r = layout.range(j);
            let size: f64 = slice[r.clone()].iter().zip(&null[r]).map(|(b, p)| b * p).sum();
            if best.is_none_or(|(s, _, _)| size > s) {
                best = Some((size, signal, j));
            }
            report.record(size, alpha, |lhs, rhs, slack| Witness {
                signal,
                alt_signal: None,
                available: Some(j),
                reported: None,
                x: Vec::new(),
                lhs,
                rhs,
                slack,
            });
        }
    }
    if let Some((s, sig, j)) = best {
        report.max_size = Some(s);
        report.argmax_signal = sig;
        report.argmax_mask = Some(j);
    }
    Ok(report)
}

/// Worst-case completion of a full-data test:
/// `b(X_J, J) = min { t(X') : X'_J = X_J }` over the grid.
pub fn worst_case_completion(t: &[f64], grid: &Grid) -> Result<TestRuleTable> {
    completion_on_layout(t, &grid.layout())
}

pub(crate) fn completion_on_layout(t: &[f64], layout: &Layout) -> Result<TestRuleTable> {
    if t.len() != layout.full_len() {
        return Err(Error::Usage(format!(
            "full-data test has {} cells, grid has {}",
            t.len(),
            layout.full_len()
        )));
    }
    if let Some(v) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Model(format!("full-data test value {v} outside [0, 1]")));
    }
    let n = layout.dim();
    let full = layout.full_mask();
    let mut values = vec![f64::INFINITY; layout.total()];
    values[layout.range(full)].copy_from_slice(t);
    // supersets have larger bit patterns, so walk masks downward
    for m in (0..full.bits()).rev() {
        let j = SubsetMask(m);
        let i = (0..n).find(|&i| !j.contains(i)).expect("proper subset");
        let parent = j.with(i);
        let poff = layout.offset(parent);
        let mut cells = layout.mask_cells(parent);
        while let Some((p, coords)) = cells.next() {
            let v = values[poff + p];
            let slot = layout.slot(j, coords);
            if v < values[slot] {
                values[slot] = v;
            }
        }
    }
    TestRuleTable::new(layout.clone(), values)
}

/// `ã(X_J, J) = max_{I ⊆ J} a(X_I, I)`, the monotone envelope of `a`.
pub fn subset_maximum(a: &TestRuleTable) -> Result<TestRuleTable> {
    let layout = a.layout().clone();
    let n = layout.dim();
    let slices = a
        .slices()
        .iter()
        .map(|src| {
            let mut out = src.clone();
            for m in 1..layout.num_masks() as u32 {
                let j = SubsetMask(m);
                let off = layout.offset(j);
                let mut cells = layout.mask_cells(j);
                while let Some((p, coords)) = cells.next() {
                    let mut best = out[off + p];
                    for i in (0..n).filter(|&i| j.contains(i)) {
                        best = best.max(out[layout.slot(j.without(i), coords)]);
                    }
                    out[off + p] = best;
                }
            }
            out
        })
        .collect::<Vec<_>>();
    match a.signals() {
        None => TestRuleTable::new(layout, slices.into_iter().next().expect("slice")),
        Some(ids) => TestRuleTable::with_signals(layout, ids.to_vec(), slices),
    }
}

/// The analyst's best report `I* ⊆ J` at full outcome `x`; ties go to the
/// smallest mask.
pub fn analyst_best_subset(
    rule: &TestRuleTable,
    signal: usize,
    x: &OutcomePoint,
    available: SubsetMask,
) -> Result<(SubsetMask, f64)> {
    let layout = rule.layout();
    if x.0.len() != layout.dim() || x.0.iter().zip(layout.sizes()).any(|(v, s)| v >= s) {
        return Err(Error::Usage("outcome does not fit the rule's grid".into()));
    }
    if !available.is_subset_of(layout.full_mask()) {
        return Err(Error::Usage(format!("{available} is not a subset of the statistics")));
    }
    let slice = rule.slice(signal)?;
    let mut best = (SubsetMask::EMPTY, f64::NEG_INFINITY);
    for i in available.subsets() {
        let v = rule.value_at(slice, i, &x.0);
        if v > best.1 {
            best = (i, v);
        }
    }
    Ok(best)
}

/// Delegation: the analyst picks the plan with the highest interim power
/// (first index on ties).
pub fn analyst_choose_plan(candidates: &[TestRuleTable], prior: &InterimPrior) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::Usage("no candidate plans".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (k, c) in candidates.iter().enumerate() {
        let p = interim_expected_power(c, prior)?;
        if p > best.1 {
            best = (k, p);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;
    use crate::model::{build_interim_prior, AvailabilityModel, SamplingModel, ThetaAtom};
    use crate::McSettings;

    fn problem(edges: &[f64], n: usize, signals: &[(Vec<f64>, AvailabilityModel)]) -> DiscreteProblem {
        let grid = Grid::new((0..n).map(|_| Axis::from_edges(edges.to_vec()).unwrap()).collect()).unwrap();
        let null_atom = vec![ThetaAtom { weight: 1.0, model: SamplingModel::unit_gaussian(vec![0.0; n]) }];
        let null = crate::model::mixture_table(&null_atom, &grid, McSettings::default()).unwrap();
        let priors = signals
            .iter()
            .enumerate()
            .map(|(s, (mean, avail))| {
                let atoms = vec![ThetaAtom { weight: 1.0, model: SamplingModel::unit_gaussian(mean.clone()) }];
                build_interim_prior(s, &atoms, avail, &grid, McSettings::default()).unwrap()
            })
            .collect();
        DiscreteProblem::new(grid, null, priors, 0.05).unwrap()
    }

    fn two_stat() -> DiscreteProblem {
        problem(
            &[-8.0, -0.5, 0.8, 8.0],
            2,
            &[(vec![0.5, 0.5], AvailabilityModel::Independent(vec![0.9, 0.5]))],
        )
    }

    #[test]
    fn conservative_rule_is_monotone() {
        let p = two_stat();
        let l = p.layout().clone();
        let full = l.full_mask();
        let rule = TestRuleTable::from_fn(l, |m, c| if m == full && c[0] + c[1] >= 3 { 1.0 } else { 0.0 }).unwrap();
        let r = check_monotonicity(&rule, &p, 0.0).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn subset_maximum_is_monotone_by_chain_enumeration() {
        let p = two_stat();
        let l = p.layout().clone();
        let mut seed = 17u64;
        let a = TestRuleTable::from_fn(l.clone(), |_, _| {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 33) as f64 / (1u64 << 31) as f64
        })
        .unwrap();
        let b = subset_maximum(&a).unwrap();
        assert!(check_monotonicity(&b, &p, 0.0).unwrap().passed());
        // brute force: b(X_J, J) equals the max of a over all I ⊆ J
        let sa = a.slice(0).unwrap();
        let sb = b.slice(0).unwrap();
        let mut cells = l.full_cells();
        while let Some((_, coords)) = cells.next() {
            for j in l.full_mask().subsets() {
                let brute = j.subsets().map(|i| sa[l.slot(i, coords)]).fold(f64::MIN, f64::max);
                assert_eq!(sb[l.slot(j, coords)], brute);
            }
        }
    }

    #[test]
    fn direct_monotonicity_violation_has_witness() {
        let p = two_stat();
        let l = p.layout().clone();
        let one = SubsetMask::from_indices([0]);
        let full = l.full_mask();
        let rule = TestRuleTable::from_fn(l, |m, c| {
            if m == one && c[0] == 2 {
                1.0
            } else if m == full && c[0] == 2 && c[1] == 0 {
                0.0
            } else {
                0.0
            }
        })
        .unwrap();
        let r = check_monotonicity(&rule, &p, DEFAULT_TOL).unwrap();
        assert!(!r.passed());
        let w = r
            .witnesses
            .iter()
            .find(|w| w.available == Some(full) && w.reported == Some(one) && w.x == vec![2, 0])
            .expect("witness for the violating cell");
        assert!(w.lhs > w.rhs + DEFAULT_TOL);
        assert_eq!(r.total_violations, 3);
    }

    #[test]
    fn completion_of_constant_is_constant() {
        let p = two_stat();
        let t = vec![0.3; p.layout().full_len()];
        let b = worst_case_completion(&t, p.grid()).unwrap();
        assert!(b.slice(0).unwrap().iter().all(|&v| v == 0.3));
    }

    #[test]
    fn completion_of_joint_exceedance_is_zero_on_singletons() {
        let p = two_stat();
        let l = p.layout().clone();
        let mut t = vec![0.0; l.full_len()];
        let mut cells = l.full_cells();
        while let Some((k, c)) = cells.next() {
            t[k] = if c[0] == 2 && c[1] == 2 { 1.0 } else { 0.0 };
        }
        let b = worst_case_completion(&t, p.grid()).unwrap();
        let s = b.slice(0).unwrap();
        for m in [1u32, 2, 0] {
            assert!(s[l.range(SubsetMask(m))].iter().all(|&v| v == 0.0));
        }
        assert!(check_monotonicity(&b, &p, 0.0).unwrap().passed());
    }

    #[test]
    fn size_report_for_zero_and_completion() {
        let p = two_stat();
        let zero = TestRuleTable::constant(p.layout().clone(), 0.0).unwrap();
        let r = check_size_control(&zero, &p, 0.05, DEFAULT_TOL).unwrap();
        assert!(r.passed());
        assert_eq!(r.max_size, Some(0.0));
        // a full-data test of size below alpha: reject in the top-right cell
        let l = p.layout();
        let mut t = vec![0.0; l.full_len()];
        t[l.full_len() - 1] = 1.0;
        let size: f64 = t.iter().zip(p.null()).map(|(a, b)| a * b).sum();
        assert!(size <= 0.05);
        let b = worst_case_completion(&t, p.grid()).unwrap();
        let r = check_size_control(&b, &p, 0.05, DEFAULT_TOL).unwrap();
        assert!(r.passed());
        assert!((r.max_size.unwrap() - size).abs() < 1e-15);
        assert_eq!(r.argmax_mask, Some(l.full_mask()));
    }

    #[test]
    fn truthful_message_checks() {
        let full = AvailabilityModel::Explicit(vec![0.0, 0.0, 0.0, 1.0]);
        let only_one = AvailabilityModel::Explicit(vec![0.0, 1.0, 0.0, 0.0]);
        let p = problem(&[-8.0, 0.0, 1.5, 8.0], 2, &[(vec![1.0, 1.0], full), (vec![1.0, 1.0], only_one)]);
        let l = p.layout().clone();
        // signal independent
        let same = TestRuleTable::constant(l.clone(), 0.05).unwrap();
        let r = check_truthful_message(&same, &p, DEFAULT_TOL).unwrap();
        assert!(r.passed());
        assert_eq!(r.min_slack, 0.0);

        // each slice tests where its own signal has data
        let full_mask = l.full_mask();
        let one = SubsetMask::from_indices([0]);
        let slice_full: Vec<f64> = {
            let t = TestRuleTable::from_fn(l.clone(), |m, c| f64::from(u8::from(m == full_mask && c[0] + c[1] >= 3)))
                .unwrap();
            t.slice(0).unwrap().to_vec()
        };
        let slice_one: Vec<f64> = {
            let t = TestRuleTable::from_fn(l.clone(), |m, c| f64::from(u8::from(one.is_subset_of(m) && c[0] == 2)))
                .unwrap();
            t.slice(0).unwrap().to_vec()
        };
        let honest = TestRuleTable::with_signals(l.clone(), vec![0, 1], vec![slice_full.clone(), slice_one.clone()])
            .unwrap();
        let r = check_truthful_message(&honest, &p, DEFAULT_TOL).unwrap();
        // summation oracle
        let u = |s: &[f64], prior: usize| -> f64 {
            s.iter().zip(&p.priors()[prior].table).map(|(a, b)| a * b).sum()
        };
        assert!(u(&slice_full, 0) > u(&slice_one, 0));
        assert!(u(&slice_one, 1) > u(&slice_full, 1));
        assert!(r.passed());

        let swapped = TestRuleTable::with_signals(l, vec![0, 1], vec![slice_one, slice_full]).unwrap();
        let r = check_truthful_message(&swapped, &p, DEFAULT_TOL).unwrap();
        assert!(!r.passed());
        assert_eq!(r.total_violations, 2);
    }

    #[test]
    fn truthful_message_needs_priors() {
        let p = two_stat();
        let l = p.layout().clone();
        let v = vec![0.0; l.total()];
        let rule = TestRuleTable::with_signals(l, vec![0, 3], vec![v.clone(), v]).unwrap();
        assert!(matches!(check_truthful_message(&rule, &p, DEFAULT_TOL), Err(Error::Model(_))));
    }

    #[test]
    fn best_subset_and_tie_breaking() {
        let p = two_stat();
        let l = p.layout().clone();
        let zero = TestRuleTable::constant(l.clone(), 0.0).unwrap();
        let x = OutcomePoint(vec![2, 0]);
        assert_eq!(analyst_best_subset(&zero, 0, &x, l.full_mask()).unwrap(), (SubsetMask::EMPTY, 0.0));

        // naive: reject when the reported mean statistic of midpoints is large
        let mids = [-4.25, 0.15, 4.4];
        let z = 1.6448536269514722;
        let naive = TestRuleTable::from_fn(l.clone(), |m, c| {
            if m.is_empty() {
                return 0.0;
            }
            let s: f64 = m.indices().map(|i| mids[c[i]]).sum();
            f64::from(u8::from(s / (m.len() as f64).sqrt() > z))
        })
        .unwrap();
        let (best, v) = analyst_best_subset(&naive, 0, &x, l.full_mask()).unwrap();
        assert_eq!((best, v), (SubsetMask::from_indices([0]), 1.0));

        let mono = subset_maximum(&naive).unwrap();
        let (best, _) = analyst_best_subset(&mono, 0, &x, l.full_mask()).unwrap();
        assert_eq!(best, SubsetMask::from_indices([0]));
    }

    #[test]
    fn choose_plan_by_dominance() {
        let p = two_stat();
        let l = p.layout().clone();
        let prior = &p.priors()[0];
        assert!(analyst_choose_plan(&[], prior).is_err());
        let zero = TestRuleTable::constant(l.clone(), 0.0).unwrap();
        let alpha = TestRuleTable::constant(l, 0.05).unwrap();
        assert_eq!(analyst_choose_plan(std::slice::from_ref(&zero), prior).unwrap().0, 0);
        let (k, power) = analyst_choose_plan(&[zero, alpha], prior).unwrap();
        assert_eq!(k, 1);
        assert!((power - 0.05).abs() < 1e-12);
    }
}
