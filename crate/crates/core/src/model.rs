//! The finite game instance: availability of statistics, interim priors
//! per analyst signal, the point null, and the size level.
//!
//! Priors are built as `P(J) · Σ_θ w(θ) P(X_J | θ)`, so the distribution of
//! the data never depends on `J` or on the signal beyond `θ`.

use serde::{Deserialize, Serialize};

use crate::discretize::{discretize_gaussian, McSettings};
use crate::error::{Error, Result};
use crate::grid::{Grid, Layout};
use crate::subset::SubsetMask;

const PMF_TOL: f64 = 1e-12;
const TABLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AvailabilityModel {
    /// `p_i = P(i ∈ J)`, independent across statistics.
    Independent(Vec<f64>),
    /// Probability of every mask, indexed by mask bits.
    Explicit(Vec<f64>),
}

impl AvailabilityModel {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            AvailabilityModel::Independent(p) => {
                if p.len() != n {
                    return Err(Error::Model(format!(
                        "{} availability probabilities for {n} statistics",
                        p.len()
                    )));
                }
                if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Model("availability probabilities must lie in [0, 1]".into()));
                }
            }
            AvailabilityModel::Explicit(pmf) => {
                if pmf.len() != 1 << n {
                    return Err(Error::Model(format!(
                        "explicit availability needs {} masses, got {}",
                        1 << n,
                        pmf.len()
                    )));
                }
                if pmf.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Model("availability masses must be nonnegative".into()));
                }
                let s: f64 = pmf.iter().sum();
                if (s - 1.0).abs() > PMF_TOL {
                    return Err(Error::Model(format!("availability pmf sums to {s}, not 1")));
                }
            }
        }
        Ok(())
    }

    /// Mass of every mask `J ⊆ {1..n}`, indexed by bits.
    pub fn pmf(&self, n: usize) -> Result<Vec<f64>> {
        self.validate(n)?;
        Ok(match self {
            AvailabilityModel::Explicit(pmf) => pmf.clone(),
            AvailabilityModel::Independent(p) => (0..1u32 << n)
                .map(|m| {
                    (0..n)
                        .map(|i| if m >> i & 1 == 1 { p[i] } else { 1.0 - p[i] })
                        .product()
                })
                .collect(),
        })
    }

    /// `P(i ∈ J)` for each statistic.
    pub fn marginals(&self, n: usize) -> Result<Vec<f64>> {
        let pmf = self.pmf(n)?;
        Ok((0..n)
            .map(|i| {
                pmf.iter()
                    .enumerate()
                    .filter(|(m, _)| m >> i & 1 == 1)
                    .map(|(_, p)| p)
                    .sum()
            })
            .collect())
    }

    /// The mask carrying all the mass, if availability is degenerate.
    pub fn degenerate_at(&self, n: usize) -> Result<Option<SubsetMask>> {
        let pmf = self.pmf(n)?;
        Ok(pmf
            .iter()
            .position(|&p| (p - 1.0).abs() <= PMF_TOL)
            .map(|m| SubsetMask(m as u32)))
    }
}

/// Sampling distribution of the full statistic vector given one `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SamplingModel {
    Gaussian { mean: Vec<f64>, covariance: Vec<Vec<f64>> },
    /// Explicit probabilities of the full cells, in layout order.
    Table { table: Vec<f64> },
}

impl SamplingModel {
    /// Independent unit-variance Gaussian around `mean`.
    pub fn unit_gaussian(mean: Vec<f64>) -> Self {
        let n = mean.len();
        let covariance = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        SamplingModel::Gaussian { mean, covariance }
    }

    pub fn cell_table(&self, grid: &Grid, mc: McSettings) -> Result<Vec<f64>> {
        match self {
            SamplingModel::Gaussian { mean, covariance } => {
                Ok(discretize_gaussian(mean, covariance, grid, mc)?.table)
            }
            SamplingModel::Table { table } => {
                let len = grid.layout().full_len();
                if table.len() != len {
                    return Err(Error::Model(format!(
                        "cell table has {} entries, grid has {len} cells",
                        table.len()
                    )));
                }
                check_distribution(table, "cell table")?;
                Ok(table.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaAtom {
    pub weight: f64,
    #[serde(flatten)]
    pub model: SamplingModel,
}

fn check_distribution(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Model(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > TABLE_TOL {
        return Err(Error::Model(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Weighted mixture of the atoms' cell tables.
pub fn mixture_table(atoms: &[ThetaAtom], grid: &Grid, mc: McSettings) -> Result<Vec<f64>> {
    if atoms.is_empty() {
        return Err(Error::Model("a prior needs at least one atom".into()));
    }
    if atoms.iter().any(|a| !(a.weight > 0.0)) {
        return Err(Error::Model("atom weights must be positive".into()));
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > PMF_TOL {
        return Err(Error::Model(format!("atom weights sum to {total}, not 1")));
    }
    let mut mix = vec![0.0; grid.layout().full_len()];
    for (k, atom) in atoms.iter().enumerate() {
        // distinct streams per atom keep the atoms' draws independent
        let seeded = McSettings { seed: mc.seed.wrapping_add(k as u64), ..mc };
        let t = atom.model.cell_table(grid, seeded)?;
        mix.iter_mut().zip(t).for_each(|(m, v)| *m += atom.weight * v);
    }
    Ok(mix)
}

/// Interim prior `P_π(X_J, J)` of one analyst signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterimPrior {
    pub signal: usize,
    /// Layout-indexed joint masses over `(J, X_J)`.
    pub table: Vec<f64>,
    /// Availability masses by mask bits (the marginal of `table` over `X_J`).
    pub availability: Vec<f64>,
}

impl InterimPrior {
    /// Wraps an explicit joint table, checking it is a distribution.
    pub fn from_table(signal: usize, layout: &Layout, table: Vec<f64>) -> Result<Self> {
        if table.len() != layout.total() {
            return Err(Error::Model(format!(
                "joint table has {} entries, expected {}",
                table.len(),
                layout.total()
            )));
        }
        check_distribution(&table, "interim prior")?;
        let availability = (0..layout.num_masks() as u32)
            .map(|m| table[layout.range(SubsetMask(m))].iter().sum())
            .collect();
        Ok(InterimPrior { signal, table, availability })
    }

    /// `P_π(J = mask)`.
    pub fn mask_mass(&self, mask: SubsetMask) -> f64 {
        self.availability[mask.index()]
    }
}

/// `P_π(X_J, J) = P(J) · Σ_θ w(θ) P(X_J | θ)`.
pub fn build_interim_prior(
    signal: usize,
    atoms: &[ThetaAtom],
    availability: &AvailabilityModel,
    grid: &Grid,
    mc: McSettings,
) -> Result<InterimPrior> {
    let n = grid.dim();
    let pmf = availability.pmf(n)?;
    let mix = mixture_table(atoms, grid, mc)?;
    let layout = grid.layout();
    let mut table = layout.all_marginals(&mix);
    for m in 0..layout.num_masks() {
        let mask = SubsetMask(m as u32);
        table[layout.range(mask)].iter_mut().for_each(|v| *v *= pmf[m]);
    }
    let s: f64 = table.iter().sum();
    if (s - 1.0).abs() > TABLE_TOL {
        return Err(Error::Model(format!("interim prior sums to {s}, not 1")));
    }
    Ok(InterimPrior { signal, table, availability: pmf })
}

/// A finite instance of the testing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    grid: Grid,
    layout: Layout,
    null: Vec<f64>,
    null_marginals: Vec<f64>,
    priors: Vec<InterimPrior>,
    alpha: f64,
}

impl DiscreteProblem {
    pub fn new(grid: Grid, null: Vec<f64>, priors: Vec<InterimPrior>, alpha: f64) -> Result<Self> {
        let layout = grid.layout();
        if null.len() != layout.full_len() {
            return Err(Error::Model(format!(
                "null table has {} entries, grid has {} cells",
                null.len(),
                layout.full_len()
            )));
        }
        check_distribution(&null, "null table")?;
        if !(alpha > 0.0 && alpha < 1.0) && alpha != 0.0 {
            return Err(Error::Model(format!("size level {alpha} outside [0, 1)")));
        }
        for (k, p) in priors.iter().enumerate() {
            if p.signal != k {
                return Err(Error::Model(format!("prior {k} carries signal id {}", p.signal)));
            }
            if p.table.len() != layout.total() {
                return Err(Error::Model(format!("prior for signal {k} does not match the grid")));
            }
        }
        let null_marginals = layout.all_marginals(&null);
        Ok(DiscreteProblem { grid, layout, null, null_marginals, priors, alpha })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// `P_θ0(X)` over full cells.
    pub fn null(&self) -> &[f64] {
        &self.null
    }

    /// `P_θ0(X_J)` for every `(J, X_J)`, layout indexed.
    pub fn null_marginals(&self) -> &[f64] {
        &self.null_marginals
    }

    pub fn priors(&self) -> &[InterimPrior] {
        &self.priors
    }

    pub fn prior(&self, signal: usize) -> Result<&InterimPrior> {
        self.priors
            .get(signal)
            .ok_or_else(|| Error::Model(format!("no interim prior for signal {signal}")))
    }

    pub fn push_prior(&mut self, mut prior: InterimPrior) -> Result<usize> {
        if prior.table.len() != self.layout.total() {
            return Err(Error::Model("prior does not match the grid".into()));
        }
        prior.signal = self.priors.len();
        self.priors.push(prior);
        Ok(self.priors.len() - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn grid(n: usize, edges: &[f64]) -> Grid {
        Grid::new((0..n).map(|_| Axis::from_edges(edges.to_vec()).unwrap()).collect()).unwrap()
    }

    #[test]
    fn independent_availability_from_motivating_example() {
        let a = AvailabilityModel::Independent(vec![0.9, 0.5]);
        let pmf = a.pmf(2).unwrap();
        let expected = [0.05, 0.45, 0.05, 0.45];
        for (p, e) in pmf.iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
        let m = a.marginals(2).unwrap();
        assert!((m[0] - 0.9).abs() < 1e-12 && (m[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn explicit_availability_validation() {
        assert!(AvailabilityModel::Explicit(vec![0.5, 0.4, 0.0, 0.0]).pmf(2).is_err());
        assert!(AvailabilityModel::Explicit(vec![0.5, 0.5]).pmf(2).is_err());
        assert!(AvailabilityModel::Independent(vec![1.2, 0.5]).pmf(2).is_err());
        let deg = AvailabilityModel::Explicit(vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(deg.degenerate_at(2).unwrap(), Some(SubsetMask(3)));
    }

    #[test]
    fn degenerate_availability_reproduces_null_on_full_set() {
        let g = grid(2, &[-8.0, -1.0, 0.5, 8.0]);
        let atoms = vec![ThetaAtom { weight: 1.0, model: SamplingModel::unit_gaussian(vec![0.0, 0.0]) }];
        let avail = AvailabilityModel::Independent(vec![1.0, 1.0]);
        let prior = build_interim_prior(0, &atoms, &avail, &g, McSettings::default()).unwrap();
        let null = mixture_table(&atoms, &g, McSettings::default()).unwrap();
        let l = g.layout();
        assert_eq!(&prior.table[l.range(l.full_mask())], null.as_slice());
        for m in 0..3 {
            assert!(prior.table[l.range(SubsetMask(m))].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn marginal_over_outcomes_equals_availability() {
        let g = grid(2, &[-8.0, -0.5, 0.0, 0.7, 8.0]);
        let atoms = vec![
            ThetaAtom { weight: 0.2, model: SamplingModel::unit_gaussian(vec![0.0, 0.0]) },
            ThetaAtom { weight: 0.5, model: SamplingModel::unit_gaussian(vec![0.3, 0.3]) },
            ThetaAtom { weight: 0.3, model: SamplingModel::unit_gaussian(vec![1.0, -0.4]) },
        ];
        let avail = AvailabilityModel::Independent(vec![0.9, 0.5]);
        let prior = build_interim_prior(0, &atoms, &avail, &g, McSettings::default()).unwrap();
        let pmf = avail.pmf(2).unwrap();
        let l = g.layout();
        // oracle: sum each mask block directly
        for m in 0..4u32 {
            let s: f64 = prior.table[l.range(SubsetMask(m))].iter().sum();
            assert!((s - pmf[m as usize]).abs() < 1e-9);
        }
        assert!((prior.table.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bad_weights_rejected() {
        let g = grid(1, &[-8.0, 0.0, 8.0]);
        let atoms = vec![ThetaAtom { weight: 0.5, model: SamplingModel::unit_gaussian(vec![0.0]) }];
        let avail = AvailabilityModel::Independent(vec![1.0]);
        assert!(build_interim_prior(0, &atoms, &avail, &g, McSettings::default()).is_err());
    }
}
