//! The analyst's linear program over the testing polytope, its simplex
//! solver, and the extremality and rationalization tools built on it.

mod extremal;
mod rationalize;
pub mod simplex;
mod testing;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::SubsetMask;

pub use extremal::{
    check_extremal_conditions, extremality_oracle, verify_perturbation, ExtremalCondition, ExtremalReport,
};
pub use rationalize::rationalizing_prior;
pub use simplex::{BasisEntry, Constraint, LpSolution, LpStatus, Sense};
pub use testing::{
    build_lp, interim_expected_power, known_j_lr_test, optimal_pap, LrTest, PapSolution, SolverLog,
};

/// What an LP column stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Variable {
    /// `t(X)` at a full outcome.
    FullData { x: Vec<usize> },
    /// `b(X_J, J)` for a proper subset `J`.
    Partial { mask: SubsetMask, x: Vec<usize> },
    Auxiliary { label: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub variables: Vec<Variable>,
    /// Maximized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    /// Checks every row and bound at `x` to `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.variables.len()
            && x.iter().zip(&self.lower).all(|(v, l)| *v >= l - tol)
            && x.iter().zip(&self.upper).all(|(v, u)| *v <= u + tol)
            && self.constraints.iter().all(|c| {
                let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
                match c.sense {
                    Sense::Le => lhs <= c.rhs + tol,
                    Sense::Ge => lhs >= c.rhs - tol,
                    Sense::Eq => (lhs - c.rhs).abs() <= tol,
                }
            })
    }

    /// Rank of the constraints (rows and bounds) active at `x`. A feasible
    /// point is a vertex exactly when this equals the variable count.
    pub fn active_rank(&self, x: &[f64], tol: f64) -> usize {
        let n = self.variables.len();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            if c.sense == Sense::Eq || (lhs - c.rhs).abs() <= tol {
                let mut r = vec![0.0; n];
                for &(j, a) in &c.coeffs {
                    r[j] += a;
                }
                rows.push(r);
            }
        }
        for j in 0..n {
            if (x[j] - self.lower[j]).abs() <= tol || (x[j] - self.upper[j]).abs() <= tol {
                let mut r = vec![0.0; n];
                r[j] = 1.0;
                rows.push(r);
            }
        }
        matrix_rank(rows, n)
    }
}

fn matrix_rank(mut rows: Vec<Vec<f64>>, ncols: usize) -> usize {
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..rows.len())
            .filter(|&i| rows[i][col].abs() > 1e-9)
            .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
        else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for r in rows.iter_mut().skip(rank + 1) {
            let f = r[col] / pivot[col];
            if f != 0.0 {
                r.iter_mut().zip(&pivot).for_each(|(a, b)| *a -= f * b);
            }
        }
        rank += 1;
    }
    rank
}

/// Solves `lp` to an optimal vertex. Infeasibility is reported through the
/// solution status.
pub fn solve_lp(lp: &LpProblem) -> Result<LpSolution> {
    let n = lp.variables.len();
    if lp.objective.len() != n {
        return Err(Error::Usage("objective length does not match the variables".into()));
    }
    let sol = simplex::simplex_maximize(&lp.objective, &lp.constraints, &lp.lower, &lp.upper)?;
    if sol.status == LpStatus::Unbounded {
        return Err(Error::Internal("unbounded program despite finite bounds".into()));
    }
    Ok(sol)
}
