use crate::error::{Error, Result};
use crate::model::{DiscreteProblem, InterimPrior};
use crate::rule::TestRuleTable;

/// Interim prior under which a deterministic, size-binding rule is optimal:
/// all mass on the full report, `(2 - α)·P0` where the rule rejects and
/// `(1 - α)·P0` where it accepts. The returned prior has signal 0.
pub fn rationalizing_prior(rule: &TestRuleTable, problem: &DiscreteProblem, alpha: f64) -> Result<InterimPrior> {
    let layout = problem.layout();
    if rule.layout() != layout {
        return Err(Error::IncompleteRule("rule grid does not match the problem grid".into()));
    }
    if rule.num_slices() != 1 {
        return Err(Error::Precondition("expected a rule without signal dimension".into()));
    }
    let full = layout.full_mask();
    let t = &rule.slices()[0][layout.range(full)];
    let null = problem.null();
    if let Some(k) = (0..t.len()).find(|&k| null[k] > 0.0 && t[k] != 0.0 && t[k] != 1.0) {
        return Err(Error::Precondition(format!(
            "rule takes value {} at {:?}, which has null mass {}",
            t[k],
            layout.partial_outcome(full, k).indices,
            null[k]
        )));
    }
    let size: f64 = t.iter().zip(null).map(|(v, p)| v * p).sum();
    if (size - alpha).abs() > 1e-9 {
        return Err(Error::Precondition(format!("size {size} does not bind at {alpha}")));
    }
    let mut table = vec![0.0; layout.total()];
    let off = layout.offset(full);
    for k in 0..t.len() {
        let w = if t[k] == 1.0 { 2.0 - alpha } else { 1.0 - alpha };
        table[off + k] = w * null[k];
    }
    InterimPrior::from_table(0, layout, table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{interim_expected_power, optimal_pap};
    use crate::subset::SubsetMask;

    #[test]
    fn normalization_identity() {
        for i in 0..=100 {
            let a = i as f64 / 100.0;
            assert!(((2.0 - a) * a + (1.0 - a).powi(2) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_cell_prior() {
        let mut p = crate::lp::testing::tests::two_cell(0.05);
        let r = optimal_pap(&p, 0, 0.05).unwrap().rule;
        let prior = rationalizing_prior(&r, &p, 0.05).unwrap();
        let k = p.layout().range(SubsetMask(1));
        assert!((prior.table[k.start + 1] - 0.0975).abs() < 1e-12);
        assert!((prior.table.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let s = p.push_prior(prior.clone()).unwrap();
        let sol = optimal_pap(&p, s, 0.05).unwrap();
        let mut prior = prior;
        prior.signal = s;
        assert!((sol.power - interim_expected_power(&r, &prior).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn randomized_rule_rejected() {
        let p = crate::lp::testing::tests::two_cell(0.05);
        let r = TestRuleTable::constant(p.layout().clone(), 0.05).unwrap();
        assert!(matches!(rationalizing_prior(&r, &p, 0.05), Err(Error::Precondition(_))));
    }
}
