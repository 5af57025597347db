use serde::{Deserialize, Serialize};

use super::simplex::{Constraint, LpStatus, Sense};
use super::{solve_lp, LpProblem, Variable};
use crate::error::{Error, Result};
use crate::implementability::completion_on_layout;
use crate::model::{DiscreteProblem, InterimPrior};
use crate::rule::TestRuleTable;
use crate::subset::SubsetMask;

/// Solver metadata attached to an optimal plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverLog {
    pub variables: usize,
    pub constraints: usize,
    pub iterations: usize,
    pub degenerate_pivots: usize,
    pub basis_hash: String,
    pub alternative_optima: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PapSolution {
    /// Worst-case completion of the optimal full-data test.
    pub rule: TestRuleTable,
    pub power: f64,
    pub log: SolverLog,
}

/// Column of a layout slot: `t(X)` columns first, then `b(X_J, J)` for the
/// proper subsets in mask order. The full mask is the last layout block.
fn column_of_slot(slot: usize, full_offset: usize, full_len: usize) -> usize {
    if slot >= full_offset {
        slot - full_offset
    } else {
        full_len + slot
    }
}

/// The analyst's program for `signal`: maximize interim power over the
/// testing polytope (size control, support, monotonicity against `t`).
pub fn build_lp(problem: &DiscreteProblem, signal: usize, alpha: f64) -> Result<LpProblem> {
    let prior = problem.prior(signal)?;
    let layout = problem.layout();
    let full = layout.full_mask();
    let full_off = layout.offset(full);
    let full_len = layout.full_len();
    let total = layout.total();

    let mut variables = Vec::with_capacity(total);
    for k in 0..full_len {
        variables.push(Variable::FullData { x: layout.partial_outcome(full, k).indices });
    }
    for m in 0..full.bits() {
        let mask = SubsetMask(m);
        for k in 0..layout.mask_len(mask) {
            variables.push(Variable::Partial { mask, x: layout.partial_outcome(mask, k).indices });
        }
    }
    let mut objective = vec![0.0; total];
    for (slot, &p) in prior.table.iter().enumerate() {
        objective[column_of_slot(slot, full_off, full_len)] = p;
    }

    let mut constraints = Vec::with_capacity(1 + full_len * (layout.num_masks() - 1));
    constraints.push(Constraint {
        coeffs: problem
            .null()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(k, &p)| (k, p))
            .collect(),
        sense: Sense::Le,
        rhs: alpha,
    });
    for m in 0..full.bits() {
        let mask = SubsetMask(m);
        let mut cells = layout.full_cells();
        while let Some((k, coords)) = cells.next() {
            let b = column_of_slot(layout.slot(mask, coords), full_off, full_len);
            constraints.push(Constraint { coeffs: vec![(b, 1.0), (k, -1.0)], sense: Sense::Le, rhs: 0.0 });
        }
    }
    Ok(LpProblem { variables, objective, constraints, lower: vec![0.0; total], upper: vec![1.0; total] })
}

fn snap(v: f64) -> f64 {
    if v < 1e-12 {
        0.0
    } else if v > 1.0 - 1e-12 {
        1.0
    } else {
        v
    }
}

/// Optimal pre-analysis plan for `signal`: the LP's full-data test with its
/// worst-case completion. The returned rule has no signal dimension.
pub fn optimal_pap(problem: &DiscreteProblem, signal: usize, alpha: f64) -> Result<PapSolution> {
    let lp = build_lp(problem, signal, alpha)?;
    let sol = solve_lp(&lp)?;
    if sol.status == LpStatus::Infeasible {
        return Err(Error::Infeasible);
    }
    let layout = problem.layout();
    let t: Vec<f64> = sol.x[..layout.full_len()].iter().map(|&v| snap(v)).collect();
    let rule = completion_on_layout(&t, layout)?;
    Ok(PapSolution {
        rule,
        power: sol.objective,
        log: SolverLog {
            variables: lp.num_variables(),
            constraints: lp.constraints.len(),
            iterations: sol.iterations,
            degenerate_pivots: sol.degenerate_pivots,
            basis_hash: sol.basis_hash,
            alternative_optima: sol.alternative_optima,
        },
    })
}

/// `Σ b(X_J, J) · P_π(X_J, J)`.
pub fn interim_expected_power(rule: &TestRuleTable, prior: &InterimPrior) -> Result<f64> {
    if rule.layout().total() != prior.table.len() {
        return Err(Error::IncompleteRule("rule and prior grids differ".into()));
    }
    let slice = rule.slice(prior.signal)?;
    Ok(slice.iter().zip(&prior.table).map(|(b, p)| b * p).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrTest {
    pub rule: TestRuleTable,
    pub registered: SubsetMask,
    pub power: f64,
    /// Likelihood-ratio cutoff `κ`.
    pub kappa: f64,
    /// Rejection probability on the boundary level, if randomized.
    pub boundary_q: Option<f64>,
}

/// Neyman-Pearson test for a signal whose availability is known to be `J'`,
/// randomized on one likelihood-ratio level so the size is exactly `alpha`,
/// and extended to other reports by `b(X_J, J) = b(X_J', J')` when
/// `J' ⊆ J`, else 0.
pub fn known_j_lr_test(problem: &DiscreteProblem, signal: usize, alpha: f64) -> Result<LrTest> {
    let prior = problem.prior(signal)?;
    let layout = problem.layout();
    let registered = prior
        .availability
        .iter()
        .position(|&p| (p - 1.0).abs() <= 1e-12)
        .map(|m| SubsetMask(m as u32))
        .ok_or_else(|| {
            Error::Precondition(format!(
                "signal {signal} does not know its available set (availability {:?})",
                prior.availability
            ))
        })?;
    let range = layout.range(registered);
    let alt = &prior.table[range.clone()];
    let null = &problem.null_marginals()[range];

    let mut reject = vec![0.0; alt.len()];
    let mut order: Vec<usize> = Vec::with_capacity(alt.len());
    for k in 0..alt.len() {
        if null[k] > 0.0 {
            order.push(k);
        } else {
            // free rejection: no null mass
            reject[k] = 1.0;
        }
    }
    let ratio = |k: usize| alt[k] / null[k];
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));

    let mut budget = alpha;
    let mut kappa = 0.0;
    let mut boundary_q = None;
    let mut start = 0;
    while start < order.len() {
        let level = ratio(order[start]);
        let mut end = start + 1;
        while end < order.len() && (ratio(order[end]) - level).abs() <= 1e-12 * level.abs().max(1e-300) {
            end += 1;
        }
        let group = &order[start..end];
        let mass: f64 = group.iter().map(|&k| null[k]).sum();
        kappa = level;
        if mass <= budget + 1e-15 {
            group.iter().for_each(|&k| reject[k] = 1.0);
            budget -= mass;
            start = end;
            if budget <= 0.0 {
                break;
            }
        } else {
            let q = (budget / mass).clamp(0.0, 1.0);
            if q > 0.0 {
                group.iter().for_each(|&k| reject[k] = q);
                boundary_q = Some(q);
            }
            break;
        }
    }

    let off = layout.offset(registered);
    let rule = TestRuleTable::from_fn(layout.clone(), |mask, coords| {
        if registered.is_subset_of(mask) {
            reject[layout.slot(registered, coords) - off]
        } else {
            0.0
        }
    })?;
    let power = interim_expected_power(&rule, prior)?;
    Ok(LrTest { rule, registered, power, kappa, boundary_q })
}
