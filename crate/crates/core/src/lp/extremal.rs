use serde::{Deserialize, Serialize};

use super::simplex::{simplex_maximize, Constraint, LpStatus, Sense};
use crate::error::{Error, Result};
use crate::grid::{Layout, PartialOutcome};
use crate::implementability::{completion_on_layout, DEFAULT_TOL};
use crate::model::DiscreteProblem;
use crate::rule::TestRuleTable;
use crate::subset::SubsetMask;

/// Which characterization condition fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtremalCondition {
    /// More than one intermediate value.
    ThreeValues,
    /// The intermediate value carries no null mass.
    NullMass,
    /// Two intermediate cells are not linked through binding subsets.
    Linked,
    /// An intermediate value is present but the size constraint is slack.
    BindingSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalReport {
    pub is_extremal: bool,
    /// The intermediate value, or the smallest one when there are several.
    pub q: Option<f64>,
    pub violated: Option<ExtremalCondition>,
    pub witnesses: Vec<PartialOutcome>,
    /// Layout-indexed `Δ` with `b ± Δ` in the testing polytope.
    pub delta: Option<Vec<f64>>,
    pub size: f64,
}

fn single_slice(rule: &TestRuleTable, problem: &DiscreteProblem) -> Result<Vec<f64>> {
    if rule.layout() != problem.layout() {
        return Err(Error::IncompleteRule("rule grid does not match the problem grid".into()));
    }
    if rule.num_slices() != 1 {
        return Err(Error::Precondition(format!(
            "extremality is defined for a single rule, got {} signal slices",
            rule.num_slices()
        )));
    }
    Ok(rule.slices()[0].clone())
}

fn size_of(b: &[f64], layout: &Layout, null: &[f64]) -> f64 {
    b[layout.range(layout.full_mask())].iter().zip(null).map(|(t, p)| t * p).sum()
}

/// First polytope constraint violated by `b` beyond `tol`, if any.
fn polytope_violation(b: &[f64], layout: &Layout, null: &[f64], alpha: f64, tol: f64) -> Option<String> {
    if let Some(k) = b.iter().position(|v| !(-tol..=1.0 + tol).contains(v)) {
        let mask = mask_of_slot(layout, k);
        return Some(format!(
            "support: value {} at {:?}",
            b[k],
            layout.partial_outcome(mask, k - layout.offset(mask))
        ));
    }
    let size = size_of(b, layout, null);
    if size > alpha + tol {
        return Some(format!("size: {size} exceeds {alpha}"));
    }
    let full = layout.full_mask();
    let off = layout.offset(full);
    for m in 0..full.bits() {
        let mask = SubsetMask(m);
        let mut cells = layout.full_cells();
        while let Some((k, coords)) = cells.next() {
            let slot = layout.slot(mask, coords);
            if b[slot] > b[off + k] + tol {
                return Some(format!(
                    "monotonicity: b = {} on {mask} exceeds t = {} at {coords:?}",
                    b[slot],
                    b[off + k]
                ));
            }
        }
    }
    None
}

fn mask_of_slot(layout: &Layout, slot: usize) -> SubsetMask {
    let m = (0..layout.num_masks() as u32)
        .find(|&m| layout.range(SubsetMask(m)).contains(&slot))
        .expect("slot inside layout");
    SubsetMask(m)
}

/// True when `rule + delta` and `rule - delta` both lie in the testing
/// polytope to `tol` and `delta` is not identically zero.
pub fn verify_perturbation(rule: &TestRuleTable, delta: &[f64], problem: &DiscreteProblem, tol: f64) -> Result<bool> {
    let b = single_slice(rule, problem)?;
    if delta.len() != b.len() {
        return Ok(false);
    }
    let layout = problem.layout();
    let ok = |sign: f64| {
        let shifted: Vec<f64> = b.iter().zip(delta).map(|(v, d)| v + sign * d).collect();
        polytope_violation(&shifted, layout, problem.null(), problem.alpha(), tol).is_none()
    };
    Ok(delta.iter().any(|d| d.abs() > tol) && ok(1.0) && ok(-1.0))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEFAULT_TOL
}

fn is_intermediate(v: f64) -> bool {
    v > DEFAULT_TOL && v < 1.0 - DEFAULT_TOL
}

/// Evaluates the three-value, null-mass and linkage conditions on a rule
/// that is the worst-case completion of its own full-data slice, and, when
/// one fails, constructs a perturbation certifying non-extremality. The
/// size constraint must bind whenever an intermediate value is present.
pub fn check_extremal_conditions(rule: &TestRuleTable, problem: &DiscreteProblem) -> Result<ExtremalReport> {
    let b = single_slice(rule, problem)?;
    let layout = problem.layout();
    let null = problem.null();
    let full = layout.full_mask();
    let off = layout.offset(full);
    let t = &b[layout.range(full)];

    let completed = completion_on_layout(t, layout)?;
    if let Some(k) = b.iter().zip(&completed.slices()[0]).position(|(x, y)| !close(*x, *y)) {
        let mask = mask_of_slot(layout, k);
        return Err(Error::Precondition(format!(
            "rule is not the worst-case completion of its full-data test: {:?} holds {} instead of {}",
            layout.partial_outcome(mask, k - layout.offset(mask)),
            b[k],
            completed.slices()[0][k]
        )));
    }

    let size = size_of(&b, layout, null);
    let mut levels: Vec<f64> = Vec::new();
    for &v in t.iter().filter(|v| is_intermediate(**v)) {
        if !levels.iter().any(|l| close(*l, v)) {
            levels.push(v);
        }
    }
    levels.sort_by(f64::total_cmp);
    let mut report =
        ExtremalReport { is_extremal: true, q: levels.first().copied(), violated: None, witnesses: vec![], delta: None, size };
    let full_witness = |k: usize| layout.partial_outcome(full, k);
    let mass_at = |q: f64| -> f64 { t.iter().zip(null).filter(|(v, _)| close(**v, q)).map(|(_, p)| p).sum() };

    if levels.len() > 1 {
        let (q1, q2) = (levels[0], levels[1]);
        let mut range: Vec<f64> = vec![0.0, 1.0];
        range.extend(t.iter().copied());
        range.sort_by(f64::total_cmp);
        range.dedup_by(|a, b| close(*a, *b));
        let pos = |q: f64| range.iter().position(|v| close(*v, q)).expect("level in range");
        let q0 = range[pos(q1) - 1];
        let q3 = range[pos(q2) + 1];
        let eps = 0.5 * (q1 - q0).min(q2 - q1).min(q3 - q2);
        let (p1, p2) = (mass_at(q1), mass_at(q2));
        let (r1, r2) = if p1 == 0.0 && p2 == 0.0 { (1.0, 1.0) } else { (p2, p1) };
        let delta = b
            .iter()
            .map(|&v| if close(v, q1) { eps * r1 } else if close(v, q2) { -eps * r2 } else { 0.0 })
            .collect();
        let k1 = t.iter().position(|v| close(*v, q1)).expect("q1 cell");
        let k2 = t.iter().position(|v| close(*v, q2)).expect("q2 cell");
        report.is_extremal = false;
        report.violated = Some(ExtremalCondition::ThreeValues);
        report.witnesses = vec![full_witness(k1), full_witness(k2)];
        report.delta = Some(delta);
        return Ok(report);
    }
    let Some(q) = report.q else {
        return Ok(report);
    };

    let q_cells: Vec<usize> = (0..t.len()).filter(|&k| close(t[k], q)).collect();
    let p_q = mass_at(q);
    if p_q <= 0.0 {
        let eps = 0.5 * q.min(1.0 - q);
        report.is_extremal = false;
        report.violated = Some(ExtremalCondition::NullMass);
        report.witnesses = vec![full_witness(q_cells[0])];
        report.delta = Some(b.iter().map(|&v| if close(v, q) { eps } else { 0.0 }).collect());
        return Ok(report);
    }

    // link q-cells through proper subsets where the completion equals q
    let component = link_components(&b, layout, &q_cells, q);
    let n_comp = component.iter().copied().max().map_or(0, |c| c + 1);
    if n_comp > 1 {
        let eps = 0.5 * q.min(1.0 - q);
        let comp_mass = |c: usize| -> f64 {
            q_cells.iter().zip(&component).filter(|(_, &cc)| cc == c).map(|(&k, _)| null[k]).sum()
        };
        let (p1, p2) = (comp_mass(0), comp_mass(1));
        let (r1, r2) = if p1 == 0.0 && p2 == 0.0 { (1.0, 1.0) } else { (p2, p1) };
        let value = |c: usize| match c {
            0 => eps * r1,
            1 => -eps * r2,
            _ => 0.0,
        };
        let mut delta = vec![0.0; b.len()];
        for (&k, &c) in q_cells.iter().zip(&component) {
            delta[off + k] = value(c);
        }
        let pos_of = |k: usize| q_cells.binary_search(&k).ok();
        for m in 0..full.bits() {
            let mask = SubsetMask(m);
            let mut cells = layout.full_cells();
            while let Some((k, coords)) = cells.next() {
                let slot = layout.slot(mask, coords);
                if close(b[slot], q) {
                    if let Some(i) = pos_of(k) {
                        delta[slot] = value(component[i]);
                    }
                }
            }
        }
        let first = |c: usize| q_cells[component.iter().position(|&cc| cc == c).expect("component")];
        report.is_extremal = false;
        report.violated = Some(ExtremalCondition::Linked);
        report.witnesses = vec![full_witness(first(0)), full_witness(first(1))];
        report.delta = Some(delta);
        return Ok(report);
    }

    let slack = problem.alpha() - size;
    if slack > DEFAULT_TOL {
        let eps = 0.5 * q.min(1.0 - q).min(slack / p_q);
        report.is_extremal = false;
        report.violated = Some(ExtremalCondition::BindingSize);
        report.witnesses = vec![full_witness(q_cells[0])];
        report.delta = Some(b.iter().map(|&v| if close(v, q) { eps } else { 0.0 }).collect());
    }
    Ok(report)
}

/// Component label per q-cell, numbered in order of first appearance.
fn link_components(b: &[f64], layout: &Layout, q_cells: &[usize], q: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..q_cells.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let full = layout.full_mask();
    for m in 0..full.bits() {
        let mask = SubsetMask(m);
        // first q-cell seen at each binding slot of this mask
        let mut anchor = vec![usize::MAX; layout.mask_len(mask)];
        let moff = layout.offset(mask);
        for (i, &k) in q_cells.iter().enumerate() {
            let coords = layout.partial_coords(full, k);
            let slot = layout.slot(mask, &coords);
            if !close(b[slot], q) {
                continue;
            }
            let a = &mut anchor[slot - moff];
            if *a == usize::MAX {
                *a = i;
            } else {
                let (ra, ri) = (find(&mut parent, *a), find(&mut parent, i));
                if ra != ri {
                    parent[ra.max(ri)] = ra.min(ri);
                }
            }
        }
    }
    let mut label = vec![usize::MAX; q_cells.len()];
    let mut next = 0;
    (0..q_cells.len())
        .map(|i| {
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            label[r]
        })
        .collect()
}

/// Searches for a nonzero `Δ` with `b ± Δ` in the testing polytope. The
/// feasible set of `Δ` is a symmetric polytope, so it is nonzero exactly
/// when some coordinate has a positive maximum; one small program is solved
/// per coordinate not pinned by the support bounds, stopping at the first
/// success.
pub fn extremality_oracle(rule: &TestRuleTable, problem: &DiscreteProblem) -> Result<Option<Vec<f64>>> {
    let b = single_slice(rule, problem)?;
    let layout = problem.layout();
    let null = problem.null();
    let alpha = problem.alpha();
    if let Some(msg) = polytope_violation(&b, layout, null, alpha, DEFAULT_TOL) {
        return Err(Error::Precondition(format!("rule is outside the testing polytope: {msg}")));
    }

    let radius: Vec<f64> = b.iter().map(|&v| v.min(1.0 - v).max(0.0)).collect();
    let free: Vec<usize> = (0..b.len()).filter(|&i| radius[i] > DEFAULT_TOL).collect();
    if free.is_empty() {
        return Ok(None);
    }
    let mut column = vec![usize::MAX; b.len()];
    for (c, &i) in free.iter().enumerate() {
        column[i] = c;
    }
    let full = layout.full_mask();
    let off = layout.offset(full);

    let mut rows = Vec::new();
    let size_terms: Vec<(usize, f64)> = (0..layout.full_len())
        .filter(|&k| column[off + k] != usize::MAX && null[k] > 0.0)
        .map(|k| (column[off + k], null[k]))
        .collect();
    if !size_terms.is_empty() {
        let slack = (alpha - size_of(&b, layout, null)).max(0.0);
        if slack <= DEFAULT_TOL {
            rows.push(Constraint { coeffs: size_terms, sense: Sense::Eq, rhs: 0.0 });
        } else {
            rows.push(Constraint { coeffs: size_terms.clone(), sense: Sense::Le, rhs: slack });
            rows.push(Constraint { coeffs: size_terms, sense: Sense::Ge, rhs: -slack });
        }
    }
    for m in 0..full.bits() {
        let mask = SubsetMask(m);
        let mut cells = layout.full_cells();
        while let Some((k, coords)) = cells.next() {
            let j = layout.slot(mask, coords);
            let kk = off + k;
            let gap = (b[kk] - b[j]).max(0.0);
            let mut coeffs = Vec::with_capacity(2);
            if column[j] != usize::MAX {
                coeffs.push((column[j], 1.0));
            }
            if column[kk] != usize::MAX {
                coeffs.push((column[kk], -1.0));
            }
            if coeffs.is_empty() {
                continue;
            }
            rows.push(Constraint { coeffs: coeffs.clone(), sense: Sense::Le, rhs: gap });
            rows.push(Constraint { coeffs, sense: Sense::Ge, rhs: -gap });
        }
    }
    let lower: Vec<f64> = free.iter().map(|&i| -radius[i]).collect();
    let upper: Vec<f64> = free.iter().map(|&i| radius[i]).collect();

    for c in 0..free.len() {
        let mut objective = vec![0.0; free.len()];
        objective[c] = 1.0;
        let sol = simplex_maximize(&objective, &rows, &lower, &upper)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Internal(format!("perturbation program ended with status {:?}", sol.status)));
        }
        if sol.objective > DEFAULT_TOL {
            let mut delta = vec![0.0; b.len()];
            for (ci, &i) in free.iter().enumerate() {
                delta[i] = sol.x[ci];
            }
            return Ok(Some(delta));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Axis, Grid};
    use crate::model::InterimPrior;

    fn problem(sizes: &[usize], null: Vec<f64>, alpha: f64) -> DiscreteProblem {
        let axes = sizes.iter().map(|&g| Axis::uniform(-1.0, 1.0, g).unwrap()).collect();
        let grid = Grid::new(axes).unwrap();
        let layout = grid.layout();
        let mut table = vec![0.0; layout.total()];
        table[layout.range(layout.full_mask())].copy_from_slice(&null);
        let prior = InterimPrior::from_table(0, &layout, table).unwrap();
        DiscreteProblem::new(grid, null, vec![prior], alpha).unwrap()
    }

    fn completed(p: &DiscreteProblem, t: &[f64]) -> TestRuleTable {
        completion_on_layout(t, p.layout()).unwrap()
    }

    #[test]
    fn zero_rule_is_extremal() {
        let p = problem(&[2, 2], vec![0.25; 4], 0.05);
        let r = completed(&p, &[0.0; 4]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert!(rep.is_extremal && rep.q.is_none());
        assert_eq!(extremality_oracle(&r, &p).unwrap(), None);
    }

    #[test]
    fn deterministic_binding_rule() {
        let p = problem(&[2, 2], vec![0.25; 4], 0.25);
        let r = completed(&p, &[0.0, 0.0, 0.0, 1.0]);
        assert!(check_extremal_conditions(&r, &p).unwrap().is_extremal);
        assert_eq!(extremality_oracle(&r, &p).unwrap(), None);
    }

    #[test]
    fn four_values_fail_first_condition() {
        let p = problem(&[2, 2], vec![0.25; 4], 0.5);
        let r = completed(&p, &[0.0, 0.3, 0.7, 1.0]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert_eq!(rep.violated, Some(ExtremalCondition::ThreeValues));
        assert!(verify_perturbation(&r, rep.delta.as_ref().unwrap(), &p, 1e-9).unwrap());
        let d = extremality_oracle(&r, &p).unwrap().unwrap();
        assert!(verify_perturbation(&r, &d, &p, 1e-9).unwrap());
    }

    #[test]
    fn single_q_cell_with_mass() {
        let p = problem(&[3], vec![0.5, 0.3, 0.2], 0.1);
        let r = completed(&p, &[0.0, 0.0, 0.5]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert!(rep.is_extremal, "{rep:?}");
        assert_eq!(rep.q, Some(0.5));
        assert_eq!(extremality_oracle(&r, &p).unwrap(), None);
    }

    #[test]
    fn q_without_null_mass() {
        let p = problem(&[3], vec![0.5, 0.5, 0.0], 0.05);
        let r = completed(&p, &[0.0, 0.0, 0.5]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert_eq!(rep.violated, Some(ExtremalCondition::NullMass));
        assert!(verify_perturbation(&r, rep.delta.as_ref().unwrap(), &p, 1e-9).unwrap());
        assert!(extremality_oracle(&r, &p).unwrap().is_some());
    }

    #[test]
    fn unlinked_q_cells() {
        // q on the anti-diagonal: no shared coordinate
        let p = problem(&[2, 2], vec![0.25; 4], 0.25);
        let r = completed(&p, &[0.5, 0.0, 0.0, 0.5]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert_eq!(rep.violated, Some(ExtremalCondition::Linked));
        assert!(verify_perturbation(&r, rep.delta.as_ref().unwrap(), &p, 1e-9).unwrap());
        assert!(extremality_oracle(&r, &p).unwrap().is_some());
    }

    #[test]
    fn linked_row_is_extremal() {
        let p = problem(&[2, 2], vec![0.25; 4], 0.25);
        let r = completed(&p, &[0.0, 0.0, 0.5, 0.5]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert!(rep.is_extremal, "{rep:?}");
        assert_eq!(extremality_oracle(&r, &p).unwrap(), None);
    }

    #[test]
    fn slack_size_with_q() {
        let p = problem(&[3], vec![0.5, 0.3, 0.2], 0.5);
        let r = completed(&p, &[0.0, 0.0, 0.5]);
        let rep = check_extremal_conditions(&r, &p).unwrap();
        assert_eq!(rep.violated, Some(ExtremalCondition::BindingSize));
        assert!(verify_perturbation(&r, rep.delta.as_ref().unwrap(), &p, 1e-9).unwrap());
        assert!(extremality_oracle(&r, &p).unwrap().is_some());
    }

    #[test]
    fn non_completion_rejected() {
        let p = problem(&[2], vec![0.5, 0.5], 0.5);
        let r = TestRuleTable::new(p.layout().clone(), vec![0.0, 0.5, 1.0]).unwrap();
        assert!(matches!(check_extremal_conditions(&r, &p), Err(Error::Precondition(_))));
        let outside = TestRuleTable::new(p.layout().clone(), vec![0.9, 1.0, 1.0]).unwrap();
        assert!(matches!(extremality_oracle(&outside, &p), Err(Error::Precondition(_))));
    }
}
