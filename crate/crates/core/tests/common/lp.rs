//! Random bounded linear programs and an exhaustive vertex oracle.

use nalgebra::{DMatrix, DVector};
use pap_core::lp::{Constraint, Sense};
use pap_core::{LpProblem, Variable};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Maximum of the objective over every basic feasible point, or `None`
/// when no vertex is feasible.
pub fn vertex_enumeration(lp: &LpProblem) -> Option<f64> {
    let n = lp.num_variables();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut r = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            r[j] += a;
        }
        rows.push((r, c.rhs));
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.lower[j]));
        rows.push((e, lp.upper[j]));
    }
    let mut best: Option<f64> = None;
    let mut pick = Vec::with_capacity(n);
    choose(rows.len(), n, 0, &mut pick, &mut |set| {
        let a = DMatrix::from_fn(n, n, |i, j| rows[set[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[set[i]].1);
        let Some(x) = a.clone().lu().solve(&b) else { return };
        if (&a * &x - &b).amax() > 1e-9 || a.rank(1e-9) < n {
            return;
        }
        let x: Vec<f64> = x.iter().copied().collect();
        if lp.is_feasible(&x, 1e-9) {
            let v: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    });
    best
}

fn choose(m: usize, k: usize, start: usize, pick: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if pick.len() == k {
        f(pick);
        return;
    }
    for i in start..m {
        if m - i < k - pick.len() {
            break;
        }
        pick.push(i);
        choose(m, k, i + 1, pick, f);
        pick.pop();
    }
}

pub fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let n = rng.random_range(1..=6usize);
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.5)).collect();
    let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.1..2.0)).collect();
    let anchor: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| rng.random_range(*l..*u)).collect();
    let m = rng.random_range(1..=5usize);
    let mut constraints = Vec::new();
    for _ in 0..m {
        let mut coeffs: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            if rng.random_bool(0.7) {
                coeffs.push((j, rng.random_range(-2.0..2.0)));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        let at: f64 = coeffs.iter().map(|&(j, a)| a * anchor[j]).sum();
        // a few rows cut the anchor off so some instances are infeasible
        let shift = if rng.random_bool(0.1) { -1.5 } else { rng.random_range(0.0..0.5) };
        let (sense, rhs) = match rng.random_range(0..6) {
            0 => (Sense::Eq, at),
            1 | 2 => (Sense::Ge, at - shift),
            _ => (Sense::Le, at + shift),
        };
        constraints.push(Constraint { coeffs, sense, rhs });
    }
    LpProblem {
        variables: (0..n).map(|j| Variable::Auxiliary { label: format!("x{j}") }).collect(),
        objective: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        constraints,
        lower,
        upper,
    }
}
