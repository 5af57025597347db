//! Random instances shared by the integration tests.
#![allow(dead_code)]

pub mod lp;

use pap_core::{worst_case_completion, Axis, DiscreteProblem, Grid, InterimPrior, Layout, SubsetMask, TestRuleTable};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn grid(sizes: &[usize]) -> Grid {
    let axes = sizes.iter().map(|&c| Axis::uniform(-3.0, 3.0, c).unwrap()).collect();
    Grid::new(axes).unwrap()
}

/// A strictly positive probability vector.
pub fn simplex_point(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Joint `(J, X_J)` table from an availability pmf and a full-data
/// distribution.
pub fn joint_table(layout: &Layout, availability: &[f64], full: &[f64]) -> Vec<f64> {
    let mut table = layout.all_marginals(full);
    for (m, &p) in availability.iter().enumerate() {
        table[layout.range(SubsetMask(m as u32))].iter_mut().for_each(|v| *v *= p);
    }
    table
}

pub fn random_prior(rng: &mut ChaCha8Rng, layout: &Layout, signal: usize, known: Option<SubsetMask>) -> InterimPrior {
    let availability = match known {
        Some(j) => (0..layout.num_masks()).map(|m| f64::from(u8::from(m == j.index()))).collect(),
        None => simplex_point(rng, layout.num_masks()),
    };
    let full = simplex_point(rng, layout.full_len());
    InterimPrior::from_table(signal, layout, joint_table(layout, &availability, &full)).unwrap()
}

/// Grid with at most `max_cells` full cells in `1..=max_dim` dimensions.
pub fn random_sizes(rng: &mut ChaCha8Rng, max_dim: usize, max_cells: usize) -> Vec<usize> {
    let dim = rng.random_range(1..=max_dim);
    let mut sizes = Vec::new();
    let mut total = 1;
    for _ in 0..dim {
        let c = rng.random_range(2..=4usize);
        if total * c > max_cells {
            sizes.push(2);
            total *= 2;
        } else {
            sizes.push(c);
            total *= c;
        }
    }
    sizes
}

pub fn random_problem(rng: &mut ChaCha8Rng, sizes: &[usize], signals: usize, alpha: f64) -> DiscreteProblem {
    let g = grid(sizes);
    let layout = g.layout();
    let null = simplex_point(rng, layout.full_len());
    let priors = (0..signals).map(|s| random_prior(rng, &layout, s, None)).collect();
    DiscreteProblem::new(g, null, priors, alpha).unwrap()
}

/// Full-data test in `[0, 1]` scaled down to size at most `alpha`.
pub fn random_full_test(rng: &mut ChaCha8Rng, null: &[f64], alpha: f64) -> Vec<f64> {
    let mut t: Vec<f64> = null.iter().map(|_| rng.random::<f64>()).collect();
    let size: f64 = t.iter().zip(null).map(|(a, b)| a * b).sum();
    if size > alpha {
        t.iter_mut().for_each(|v| *v *= alpha / size);
    }
    t
}

pub fn power(rule: &TestRuleTable, prior: &InterimPrior) -> f64 {
    rule.slices()[0].iter().zip(&prior.table).map(|(b, p)| b * p).sum()
}

pub fn size(t: &[f64], null: &[f64]) -> f64 {
    t.iter().zip(null).map(|(a, b)| a * b).sum()
}

/// A completed rule with values in `{0, q, 1}` and a problem whose size
/// bound is either binding or slack.
pub fn random_completion(rng: &mut ChaCha8Rng) -> Option<(DiscreteProblem, TestRuleTable)> {
    let sizes = random_sizes(rng, 3, 12);
    let problem = random_problem(rng, &sizes, 1, 0.05);
    let q = rng.random_range(0.1..0.9);
    let p_mid = if rng.random_bool(0.5) { 0.0 } else { 0.3 };
    let t: Vec<f64> = problem
        .null()
        .iter()
        .map(|_| {
            let u = rng.random::<f64>();
            if u < p_mid {
                q
            } else if u < p_mid + (1.0 - p_mid) / 2.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let mass = size(&t, problem.null());
    let alpha = if rng.random_bool(0.75) { mass } else { mass + 0.02 };
    if alpha >= 1.0 {
        return None;
    }
    let rule = worst_case_completion(&t, problem.grid()).unwrap();
    Some((problem.with_alpha(alpha), rule))
}
