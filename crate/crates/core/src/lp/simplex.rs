//! Dense bounded-variable primal simplex.
//!
//! Two phases with artificial variables; variables carry finite bounds and
//! nonbasic variables sit at either bound. Pivoting is deterministic:
//! Bland's smallest-index rule for both the entering column and ratio-test
//! ties, so the same problem always yields the same vertex.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FEASIBILITY_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Which column is basic in each row: a structural variable or the slack of
/// a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisEntry {
    Variable(usize),
    Slack(usize),
    Artificial(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub basis: Vec<BasisEntry>,
    /// Structural variables resting at their upper bound.
    pub at_upper: Vec<usize>,
    pub iterations: usize,
    pub degenerate_pivots: usize,
    /// A nonbasic column with zero reduced cost could move: the optimum may
    /// not be unique.
    pub alternative_optima: bool,
    pub basis_hash: String,
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Status {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    ncols: usize,
    /// row-major `B^{-1} A`
    t: Vec<f64>,
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    reduced: Vec<f64>,
    allowed: Vec<bool>,
    iterations: usize,
    degenerate: usize,
    scratch: Vec<usize>,
}

impl Tableau {
    fn row(&self, i: usize) -> &[f64] {
        &self.t[i * self.ncols..(i + 1) * self.ncols]
    }

    fn reset_reduced(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(self.row(i)) {
                    *dj -= cb * tij;
                }
            }
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.reduced = d;
    }

    fn value_of_nonbasic(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Upper => self.upper[j],
            _ => 0.0,
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let p = self.t[r * nc + q];
        self.scratch.clear();
        for j in 0..nc {
            let v = &mut self.t[r * nc + j];
            if *v != 0.0 {
                *v /= p;
                if v.abs() < 1e-15 {
                    *v = 0.0;
                } else {
                    self.scratch.push(j);
                }
            }
        }
        self.t[r * nc + q] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        let nz = &self.scratch;
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for &j in nz {
                    row[j] -= f * prow[j];
                }
                row[q] = 0.0;
            }
        };
        before.chunks_mut(nc).for_each(eliminate);
        after.chunks_mut(nc).for_each(eliminate);
        let f = self.reduced[q];
        if f != 0.0 {
            for &j in nz {
                self.reduced[j] -= f * prow[j];
            }
            self.reduced[q] = 0.0;
        }
    }

    /// Runs simplex iterations until optimal. Returns false when unbounded.
    fn optimize(&mut self, max_iter: usize) -> Result<bool> {
        loop {
            if self.iterations >= max_iter {
                return Err(Error::Internal(format!("iteration limit {max_iter} reached")));
            }
            let entering = (0..self.ncols).find(|&j| {
                self.allowed[j]
                    && match self.status[j] {
                        Status::Lower => self.upper[j] > 0.0 && self.reduced[j] > COST_TOL,
                        Status::Upper => self.reduced[j] < -COST_TOL,
                        Status::Basic => false,
                    }
            });
            let Some(q) = entering else { return Ok(true) };
            let dir = if self.status[q] == Status::Lower { 1.0 } else { -1.0 };

            // ratio test; ties go to the smallest basic column index
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..self.m {
                let a = dir * self.t[i * self.ncols + q];
                let limit = if a > PIVOT_TOL {
                    self.beta[i].max(0.0) / a
                } else if a < -PIVOT_TOL && self.upper[self.basis[i]].is_finite() {
                    (self.upper[self.basis[i]] - self.beta[i]).max(0.0) / -a
                } else {
                    continue;
                };
                let better = match best {
                    None => true,
                    Some((l, _, col)) => {
                        limit < l - 1e-12 || (limit <= l + 1e-12 && self.basis[i] < col)
                    }
                };
                if better {
                    best = Some((limit, i, self.basis[i]));
                }
            }
            let flip = self.upper[q];
            let theta = match best {
                None if !flip.is_finite() => return Ok(false),
                None => flip,
                Some((l, _, _)) => l.min(flip),
            };
            self.iterations += 1;
            if theta <= 0.0 {
                self.degenerate += 1;
            }
            for i in 0..self.m {
                let a = self.t[i * self.ncols + q];
                if a != 0.0 {
                    self.beta[i] -= dir * theta * a;
                }
            }
            match best {
                Some((l, r, _)) if l <= flip => {
                    let leaving = self.basis[r];
                    let a = dir * self.t[r * self.ncols + q];
                    let entering_value = self.value_of_nonbasic(q) + dir * theta;
                    self.status[leaving] = if a > 0.0 { Status::Lower } else { Status::Upper };
                    self.pivot(r, q);
                    self.basis[r] = q;
                    self.status[q] = Status::Basic;
                    self.beta[r] = entering_value;
                }
                _ => {
                    self.status[q] = if dir > 0.0 { Status::Upper } else { Status::Lower };
                }
            }
        }
    }
}

/// Maximizes `objective · x` subject to `constraints` and
/// `lower <= x <= upper` (all bounds finite).
pub fn simplex_maximize(
    objective: &[f64],
    constraints: &[Constraint],
    lower: &[f64],
    upper: &[f64],
) -> Result<LpSolution> {
    let n = objective.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::Usage("bounds do not match the variable count".into()));
    }
    if lower.iter().chain(upper).any(|v| !v.is_finite()) || lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(Error::Usage("variable bounds must be finite with lower <= upper".into()));
    }
    for c in constraints {
        if c.coeffs.iter().any(|&(j, _)| j >= n) {
            return Err(Error::Usage("constraint references an undeclared variable".into()));
        }
    }
    let m = constraints.len();
    let slack_cols: Vec<Option<usize>> = {
        let mut next = n;
        constraints
            .iter()
            .map(|c| {
                (c.sense != Sense::Eq).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect()
    };
    let n_slack = slack_cols.iter().flatten().count();

    // shifted right-hand sides and row signs
    let mut rhs = Vec::with_capacity(m);
    let mut sign = Vec::with_capacity(m);
    for c in constraints {
        let shifted = c.rhs - c.coeffs.iter().map(|&(j, a)| a * lower[j]).sum::<f64>();
        let s = if shifted < 0.0 { -1.0 } else { 1.0 };
        rhs.push(shifted * s);
        sign.push(s);
    }
    // a row can start from its slack when the slack enters with +1
    let needs_art: Vec<bool> = constraints
        .iter()
        .zip(&sign)
        .map(|(c, &s)| match c.sense {
            Sense::Le => s < 0.0,
            Sense::Ge => s > 0.0,
            Sense::Eq => true,
        })
        .collect();
    let n_art = needs_art.iter().filter(|&&b| b).count();
    let ncols = n + n_slack + n_art;

    let mut t = vec![0.0; m * ncols];
    let mut basis = vec![0; m];
    let mut art_of_row = vec![None; m];
    let mut next_art = n + n_slack;
    for (i, c) in constraints.iter().enumerate() {
        let row = &mut t[i * ncols..(i + 1) * ncols];
        for &(j, a) in &c.coeffs {
            row[j] += a * sign[i];
        }
        if let Some(sc) = slack_cols[i] {
            let coef = if c.sense == Sense::Le { 1.0 } else { -1.0 };
            row[sc] = coef * sign[i];
        }
        if needs_art[i] {
            row[next_art] = 1.0;
            basis[i] = next_art;
            art_of_row[i] = Some(next_art);
            next_art += 1;
        } else {
            basis[i] = slack_cols[i].expect("slack row");
        }
    }
    let mut upper_all = vec![f64::INFINITY; ncols];
    for j in 0..n {
        upper_all[j] = upper[j] - lower[j];
    }
    let mut status = vec![Status::Lower; ncols];
    for &b in &basis {
        status[b] = Status::Basic;
    }
    let mut cost = vec![0.0; ncols];
    for c in cost.iter_mut().skip(n + n_slack) {
        *c = -1.0;
    }
    let mut tab = Tableau {
        m,
        ncols,
        t,
        beta: rhs,
        basis,
        status,
        upper: upper_all,
        cost,
        reduced: Vec::new(),
        allowed: vec![true; ncols],
        iterations: 0,
        degenerate: 0,
        scratch: Vec::with_capacity(ncols),
    };
    let max_iter = 50 * (m + ncols) + 10_000;

    if n_art > 0 {
        tab.reset_reduced();
        tab.optimize(max_iter)?;
        let infeas: f64 = (0..m)
            .filter(|&i| tab.basis[i] >= n + n_slack)
            .map(|i| tab.beta[i])
            .sum();
        if infeas > FEASIBILITY_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::NAN,
                basis: Vec::new(),
                at_upper: Vec::new(),
                iterations: tab.iterations,
                degenerate_pivots: tab.degenerate,
                alternative_optima: false,
                basis_hash: String::new(),
            });
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if tab.basis[i] < n + n_slack {
                continue;
            }
            if let Some(q) = (0..n + n_slack)
                .find(|&j| tab.status[j] != Status::Basic && tab.t[i * ncols + j].abs() > 1e-9)
            {
                let leaving = tab.basis[i];
                let value = tab.value_of_nonbasic(q);
                tab.pivot(i, q);
                tab.status[leaving] = Status::Lower;
                tab.basis[i] = q;
                tab.status[q] = Status::Basic;
                tab.beta[i] = value;
            }
        }
        for j in n + n_slack..ncols {
            tab.upper[j] = 0.0;
            tab.allowed[j] = false;
        }
        let _ = art_of_row;
    }

    tab.cost = vec![0.0; ncols];
    tab.cost[..n].copy_from_slice(objective);
    tab.reset_reduced();
    if !tab.optimize(max_iter)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: Vec::new(),
            objective: f64::INFINITY,
            basis: Vec::new(),
            at_upper: Vec::new(),
            iterations: tab.iterations,
            degenerate_pivots: tab.degenerate,
            alternative_optima: false,
            basis_hash: String::new(),
        });
    }

    let mut shifted = vec![0.0; ncols];
    for j in 0..ncols {
        shifted[j] = tab.value_of_nonbasic(j);
    }
    for (i, &b) in tab.basis.iter().enumerate() {
        shifted[b] = tab.beta[i];
    }
    let x: Vec<f64> = (0..n)
        .map(|j| (lower[j] + shifted[j]).clamp(lower[j], upper[j]))
        .collect();
    let objective_value = objective.iter().zip(&x).map(|(c, v)| c * v).sum();

    let slack_owner: Vec<usize> = {
        let mut owner = vec![usize::MAX; ncols];
        for (i, sc) in slack_cols.iter().enumerate() {
            if let Some(sc) = sc {
                owner[*sc] = i;
            }
        }
        owner
    };
    let mut art_owner = vec![usize::MAX; ncols];
    {
        let mut k = n + n_slack;
        for (i, &need) in needs_art.iter().enumerate() {
            if need {
                art_owner[k] = i;
                k += 1;
            }
        }
    }
    let basis: Vec<BasisEntry> = tab
        .basis
        .iter()
        .map(|&b| {
            if b < n {
                BasisEntry::Variable(b)
            } else if b < n + n_slack {
                BasisEntry::Slack(slack_owner[b])
            } else {
                BasisEntry::Artificial(art_owner[b])
            }
        })
        .collect();
    let at_upper: Vec<usize> = (0..n)
        .filter(|&j| tab.status[j] == Status::Upper && tab.upper[j] > 0.0)
        .collect();
    let alternative_optima = (0..n + n_slack).any(|j| {
        tab.status[j] != Status::Basic && tab.upper[j] > 0.0 && tab.reduced[j].abs() <= COST_TOL
    });
    let mut hasher = Sha256::new();
    for &b in &tab.basis {
        hasher.update((b as u64).to_le_bytes());
    }
    hasher.update(b"|");
    for &j in &at_upper {
        hasher.update((j as u64).to_le_bytes());
    }
    let basis_hash = hex::encode(&hasher.finalize()[..8]);

    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective: objective_value,
        basis,
        at_upper,
        iterations: tab.iterations,
        degenerate_pivots: tab.degenerate,
        alternative_optima,
        basis_hash,
    })
}
