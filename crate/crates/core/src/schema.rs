//! JSON form of a [`DiscreteProblem`], shared by the command line and the
//! HTTP service.

use serde::{Deserialize, Serialize};

use crate::discretize::McSettings;
use crate::error::Error;
use crate::grid::{Axis, Grid};
use crate::model::{build_interim_prior, AvailabilityModel, DiscreteProblem, InterimPrior, SamplingModel, ThetaAtom};

/// A validation failure located in the input document.
#[derive(Debug, thiserror::Error)]
#[error("{field_path}: {error}")]
pub struct FieldError {
    pub field_path: String,
    pub error: Error,
}

fn at(path: impl Into<String>) -> impl FnOnce(Error) -> FieldError {
    let field_path = path.into();
    move |error| FieldError { field_path, error }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AxisSpec {
    Edges { edges: Vec<f64> },
    Uniform { lo: f64, hi: f64, cells: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub axis: AxisSpec,
}

impl StatisticSpec {
    pub fn cells(&self) -> usize {
        match &self.axis {
            AxisSpec::Edges { edges } => edges.len().saturating_sub(1),
            AxisSpec::Uniform { cells, .. } => *cells,
        }
    }

    fn axis(&self) -> crate::error::Result<Axis> {
        match &self.axis {
            AxisSpec::Edges { edges } => Axis::from_edges(edges.clone()),
            AxisSpec::Uniform { lo, hi, cells } => Axis::uniform(*lo, *hi, *cells),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalSpec {
    /// Prior over `θ` atoms and an availability model.
    Model { atoms: Vec<ThetaAtom>, availability: AvailabilityModel },
    /// Explicit layout-indexed joint table over `(J, X_J)`.
    Joint { joint: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub statistics: Vec<StatisticSpec>,
    /// Sampling model at `θ = 0`.
    pub null: SamplingModel,
    pub signals: Vec<SignalSpec>,
    pub alpha: f64,
    #[serde(default)]
    pub mc: McSettings,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.statistics.len()
    }

    /// Number of full-data cells, saturating.
    pub fn cells(&self) -> usize {
        self.statistics.iter().fold(1usize, |a, s| a.saturating_mul(s.cells()))
    }

    pub fn build(&self) -> Result<DiscreteProblem, FieldError> {
        let axes = self
            .statistics
            .iter()
            .enumerate()
            .map(|(i, s)| s.axis().map_err(at(format!("statistics[{i}]"))))
            .collect::<Result<Vec<_>, _>>()?;
        let grid = Grid::new(axes).map_err(at("statistics"))?;
        let null = self.null.cell_table(&grid, self.mc).map_err(at("null"))?;
        let layout = grid.layout();
        let priors = self
            .signals
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let path = format!("signals[{i}]");
                match s {
                    SignalSpec::Model { atoms, availability } => {
                        // offset the seed per signal so signals do not share draws
                        let mc = McSettings { seed: self.mc.seed.wrapping_add(1000 * (i as u64 + 1)), ..self.mc };
                        build_interim_prior(i, atoms, availability, &grid, mc).map_err(at(path))
                    }
                    SignalSpec::Joint { joint } => {
                        InterimPrior::from_table(i, &layout, joint.clone()).map_err(at(format!("{path}.joint")))
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(FieldError {
                field_path: "alpha".into(),
                error: Error::Model(format!("alpha must be in [0, 1), got {}", self.alpha)),
            });
        }
        DiscreteProblem::new(grid, null, priors, self.alpha).map_err(at(""))
    }
}
