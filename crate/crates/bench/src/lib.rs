//! Fixed instances for the criterion benchmarks in `benches/`.

use pap_core::gaussian::{GaussianDesign, MotivatingConfig, ThetaGrid};
use pap_core::{
    build_interim_prior, AvailabilityModel, Axis, DiscreteProblem, Grid, McSettings, Result, SamplingModel, ThetaAtom,
};

/// Independent unit Gaussians on `cells` uniform cells per statistic, one
/// prior shifted by 1.5 with availability 0.5 per statistic.
pub fn gaussian_problem(dim: usize, cells: usize) -> Result<DiscreteProblem> {
    let grid = Grid::new((0..dim).map(|_| Axis::uniform(-6.0, 7.5, cells)).collect::<Result<_>>()?)?;
    let mc = McSettings::default();
    let null = SamplingModel::unit_gaussian(vec![0.0; dim]).cell_table(&grid, mc)?;
    let atom = ThetaAtom { weight: 1.0, model: SamplingModel::unit_gaussian(vec![1.5; dim]) };
    let prior = build_interim_prior(0, &[atom], &AvailabilityModel::Independent(vec![0.5; dim]), &grid, mc)?;
    DiscreteProblem::new(grid, null, vec![prior], 0.05)
}

pub fn motivating(reps: usize) -> MotivatingConfig {
    MotivatingConfig {
        n: 2,
        theta: ThetaGrid::Range { start: 0.0, stop: 3.0, points: 4 },
        availability: vec![0.9, 0.5],
        alpha: 0.05,
        reps,
        seed: 1,
        a4_statistic: 1,
    }
}

pub fn two_arm_design() -> GaussianDesign {
    GaussianDesign {
        mu: vec![100.0, 120.0],
        prior_cov: vec![vec![22_500.0, 7_200.0], vec![7_200.0, 25_600.0]],
        arm_sd: vec![700.0, 700.0],
        control_sd: 700.0,
        n_sample: 100.0,
    }
}
