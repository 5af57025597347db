//! Cell probabilities of Gaussian sampling models on a [`Grid`].
//!
//! Diagonal covariances are integrated exactly from per-coordinate CDF
//! differences. Correlated covariances are binned from seeded Monte-Carlo
//! draws; the draws are split into fixed chunks with their own ChaCha
//! streams so the table does not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::stats::norm_interval;

const CHUNK: usize = 1 << 16;

/// Minimum number of marginal standard deviations the grid should span on
/// each side of the mean.
pub const COVERAGE_SDS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub draws: usize,
    pub seed: u64,
}

impl Default for McSettings {
    fn default() -> Self {
        McSettings { draws: 1_000_000, seed: 20_240_601 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizationMethod {
    Analytic,
    MonteCarlo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discretization {
    /// Probabilities of the full cells, in layout order.
    pub table: Vec<f64>,
    pub method: DiscretizationMethod,
    pub coverage_warning: Option<String>,
}

/// Validated covariance with a factor `L` such that `L L' = Σ`.
pub(crate) struct Covariance {
    pub matrix: DMatrix<f64>,
    pub factor: DMatrix<f64>,
}

pub(crate) fn factor_psd(cov: &[Vec<f64>]) -> Result<Covariance> {
    let n = cov.len();
    if cov.iter().any(|r| r.len() != n) {
        return Err(Error::Model("covariance must be square".into()));
    }
    let m = DMatrix::from_fn(n, n, |i, j| cov[i][j]);
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::Model("covariance is not symmetric".into()));
            }
        }
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model("covariance has non-finite entries".into()));
    }
    if let Some(chol) = m.clone().cholesky() {
        return Ok(Covariance { factor: chol.l(), matrix: m });
    }
    let eig = m.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::Model("covariance is not positive semi-definite".into()));
    }
    let roots = DVector::from_iterator(n, eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()));
    let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    Ok(Covariance { factor, matrix: m })
}

fn coverage_warning(means: &[f64], sds: &[f64], grid: &Grid) -> Option<String> {
    let short: Vec<String> = grid
        .axes()
        .iter()
        .enumerate()
        .filter(|(i, a)| {
            let e = a.edges();
            e[0] > means[*i] - COVERAGE_SDS * sds[*i]
                || e[e.len() - 1] < means[*i] + COVERAGE_SDS * sds[*i]
        })
        .map(|(i, _)| (i + 1).to_string())
        .collect();
    (!short.is_empty()).then(|| {
        format!(
            "grid covers less than {COVERAGE_SDS} standard deviations for statistic(s) {}; tail mass folded into outer cells",
            short.join(",")
        )
    })
}

/// Cell probabilities of `N(means, covariance)` on `grid`.
pub fn discretize_gaussian(
    means: &[f64],
    covariance: &[Vec<f64>],
    grid: &Grid,
    mc: McSettings,
) -> Result<Discretization> {
    let n = grid.dim();
    if means.len() != n || covariance.len() != n {
        return Err(Error::Model(format!(
            "gaussian model has dimension {} but the grid has {n} statistics",
            means.len()
        )));
    }
    let cov = factor_psd(covariance)?;
    let sds: Vec<f64> = (0..n).map(|i| cov.matrix[(i, i)].sqrt()).collect();
    let warning = coverage_warning(means, &sds, grid);
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || covariance[i][j] == 0.0));
    let layout = grid.layout();

    if diagonal {
        let per_axis: Vec<Vec<f64>> = grid
            .axes()
            .iter()
            .enumerate()
            .map(|(i, axis)| {
                (0..axis.len())
                    .map(|c| {
                        let (lo, hi) = axis.open_bounds(c);
                        if sds[i] == 0.0 {
                            let inside = (lo < means[i] || lo == f64::NEG_INFINITY) && means[i] <= hi;
                            if inside { 1.0 } else { 0.0 }
                        } else {
                            norm_interval((lo - means[i]) / sds[i], (hi - means[i]) / sds[i])
                        }
                    })
                    .collect()
            })
            .collect();
        let mut table = vec![0.0; layout.full_len()];
        let mut cells = layout.full_cells();
        while let Some((k, coords)) = cells.next() {
            table[k] = coords.iter().enumerate().map(|(i, &c)| per_axis[i][c]).product();
        }
        return Ok(Discretization {
            table,
            method: DiscretizationMethod::Analytic,
            coverage_warning: warning,
        });
    }

    if mc.draws == 0 {
        return Err(Error::Usage("Monte-Carlo discretization needs draws > 0".into()));
    }
    let chunks = mc.draws.div_ceil(CHUNK);
    let full_mask = layout.full_mask();
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(mc.draws - c * CHUNK);
            let mut counts = vec![0u64; layout.full_len()];
            let mut z = vec![0.0; n];
            let mut coords = vec![0usize; n];
            for _ in 0..len {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                for i in 0..n {
                    let x = means[i] + (0..n).map(|j| cov.factor[(i, j)] * z[j]).sum::<f64>();
                    coords[i] = grid.axes()[i].locate(x);
                }
                counts[layout.project(full_mask, &coords)] += 1;
            }
            counts
        })
        .reduce(
            || vec![0u64; layout.full_len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let total = mc.draws as f64;
    Ok(Discretization {
        table: counts.into_iter().map(|c| c as f64 / total).collect(),
        method: DiscretizationMethod::MonteCarlo,
        coverage_warning: warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Axis;

    fn split_grid(n: usize) -> Grid {
        Grid::new((0..n).map(|_| Axis::from_edges(vec![-8.0, 0.0, 8.0]).unwrap()).collect()).unwrap()
    }

    #[test]
    fn one_statistic_symmetric() {
        let d = discretize_gaussian(&[0.0], &[vec![1.0]], &split_grid(1), McSettings::default()).unwrap();
        assert_eq!(d.method, DiscretizationMethod::Analytic);
        assert!((d.table[0] - 0.5).abs() < 1e-9 && (d.table[1] - 0.5).abs() < 1e-9);
        assert!(d.coverage_warning.is_none());
    }

    #[test]
    fn independent_pair_quadrants() {
        let cov = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = discretize_gaussian(&[0.0, 0.0], &cov, &split_grid(2), McSettings::default()).unwrap();
        for p in d.table {
            assert!((p - 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn correlated_orthant_matches_arcsine_identity() {
        // P(X1 > 0, X2 > 0) = 1/4 + asin(rho) / (2 pi) = 1/3 at rho = 1/2.
        let cov = vec![vec![1.0, 0.5], vec![0.5, 1.0]];
        let mc = McSettings { draws: 1_000_000, seed: 7 };
        let d = discretize_gaussian(&[0.0, 0.0], &cov, &split_grid(2), mc).unwrap();
        assert_eq!(d.method, DiscretizationMethod::MonteCarlo);
        let expected = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
        let se = (expected * (1.0 - expected) / 1e6).sqrt();
        assert!((d.table[3] - expected).abs() < 4.0 * se, "{} vs {expected}", d.table[3]);
        let s: f64 = d.table.iter().sum();
        assert!((s - 1.0).abs() < 3.0 / 1e3);
        let again = discretize_gaussian(&[0.0, 0.0], &cov, &split_grid(2), mc).unwrap();
        assert_eq!(d.table, again.table);
    }

    #[test]
    fn rejects_bad_covariance() {
        let g = split_grid(2);
        let not_psd = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(
            discretize_gaussian(&[0.0, 0.0], &not_psd, &g, McSettings::default()),
            Err(Error::Model(_))
        ));
        let asym = vec![vec![1.0, 0.2], vec![0.1, 1.0]];
        assert!(discretize_gaussian(&[0.0, 0.0], &asym, &g, McSettings::default()).is_err());
    }

    #[test]
    fn narrow_grid_warns() {
        let g = Grid::new(vec![Axis::from_edges(vec![-2.0, 0.0, 2.0]).unwrap()]).unwrap();
        let d = discretize_gaussian(&[0.0], &[vec![1.0]], &g, McSettings::default()).unwrap();
        assert!(d.coverage_warning.is_some());
        // tails still folded into the outer cells
        assert!((d.table.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_psd_is_accepted() {
        let cov = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let d = discretize_gaussian(&[0.0, 0.0], &cov, &split_grid(2), McSettings { draws: 100_000, seed: 1 })
            .unwrap();
        // perfectly correlated: off-diagonal quadrants are empty
        assert_eq!(d.table[1], 0.0);
        assert_eq!(d.table[2], 0.0);
    }
}
