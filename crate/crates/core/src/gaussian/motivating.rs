//! The five testing rules for `n` unit-variance Gaussian statistics with a
//! common mean `θ`, each statistic observed independently with its own
//! probability, and their power curves.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discretize::McSettings;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{AvailabilityModel, SamplingModel, ThetaAtom};
use crate::rule::TestRuleTable;
use crate::schema::{AxisSpec, ProblemSpec, SignalSpec, StatisticSpec};
use crate::mc::stream_rng;
use crate::stats::{binomial_se, norm_quantile, norm_sf};
use crate::subset::{SubsetMask, MAX_STATISTICS};

pub const MIN_CURVE_REPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    /// Optimal test using all the data, ignoring availability.
    A1,
    /// Naive test; the analyst reports the best subset.
    A2,
    /// Conservative test: rejects only on the full report.
    A3,
    /// Single-statistic test without a pre-analysis plan.
    A4,
    /// Test with a pre-analysis plan registering the available set.
    A5,
}

impl RuleKind {
    pub const ALL: [RuleKind; 5] = [RuleKind::A1, RuleKind::A2, RuleKind::A3, RuleKind::A4, RuleKind::A5];

    pub fn label(self) -> &'static str {
        match self {
            RuleKind::A1 => "a1",
            RuleKind::A2 => "a2",
            RuleKind::A3 => "a3",
            RuleKind::A4 => "a4",
            RuleKind::A5 => "a5",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Usage(format!("unknown rule kind {s:?}; expected one of a1..a5")))
    }
}

/// Either an explicit list or `points` evenly spaced values on `[start, stop]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaGrid {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl ThetaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            ThetaGrid::List(v) => v.clone(),
            ThetaGrid::Range { start, stop, points } => match points {
                0 => vec![],
                1 => vec![*start],
                _ => (0..*points)
                    .map(|i| start + (stop - start) * i as f64 / (*points - 1) as f64)
                    .collect(),
            },
        }
    }
}

fn default_a4_statistic() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotivatingConfig {
    pub n: usize,
    pub theta: ThetaGrid,
    /// Probability that each statistic is available, independently.
    pub availability: Vec<f64>,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
    /// One-based index of the statistic used by `a4`.
    #[serde(default = "default_a4_statistic")]
    pub a4_statistic: usize,
}

impl MotivatingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_STATISTICS {
            return Err(Error::Model(format!("n must be in 1..={MAX_STATISTICS}, got {}", self.n)));
        }
        if self.availability.len() != self.n {
            return Err(Error::Model(format!(
                "availability has {} entries for {} statistics",
                self.availability.len(),
                self.n
            )));
        }
        if let Some(p) = self.availability.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Model(format!("availability probability {p} outside [0, 1]")));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Model(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.reps < MIN_CURVE_REPS {
            return Err(Error::Usage(format!("reps must be at least {MIN_CURVE_REPS}, got {}", self.reps)));
        }
        let thetas = self.theta.values();
        if thetas.is_empty() || thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::Model("theta grid must be nonempty and finite".into()));
        }
        if !(1..=self.n).contains(&self.a4_statistic) {
            return Err(Error::Model(format!("a4_statistic must be in 1..={}", self.n)));
        }
        Ok(())
    }

    pub fn critical_value(&self) -> f64 {
        norm_quantile(1.0 - self.alpha)
    }

    /// `P(J = mask)` under independent availability.
    pub fn mask_probability(&self, mask: SubsetMask) -> f64 {
        self.availability
            .iter()
            .enumerate()
            .map(|(i, &p)| if mask.contains(i) { p } else { 1.0 - p })
            .product()
    }

    /// Distribution of `|J|`.
    pub fn size_distribution(&self) -> Vec<f64> {
        let mut dist = vec![1.0];
        for &p in &self.availability {
            let mut next = vec![0.0; dist.len() + 1];
            for (k, &q) in dist.iter().enumerate() {
                next[k] += q * (1.0 - p);
                next[k + 1] += q * p;
            }
            dist = next;
        }
        dist
    }
}

/// A fitted rule of one kind; maps `(X, J)` to a rejection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotivatingRule {
    pub kind: RuleKind,
    pub n: usize,
    pub z: f64,
    /// Zero-based statistic used by `a4`.
    pub statistic: usize,
}

pub fn make_rule(kind: RuleKind, config: &MotivatingConfig) -> Result<MotivatingRule> {
    config.validate()?;
    Ok(MotivatingRule { kind, n: config.n, z: config.critical_value(), statistic: config.a4_statistic - 1 })
}

/// `max_{∅ ≠ I ⊆ J} |I|^{-1/2} Σ_{i∈I} x_i`: the best subset of each size
/// is the top of `x_J`.
pub fn naive_best_statistic(x: &[f64], available: SubsetMask) -> Option<f64> {
    let mut v: Vec<f64> = available.indices().map(|i| x[i]).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    let mut sum = 0.0;
    let mut best: Option<f64> = None;
    for (m, xi) in v.iter().enumerate() {
        sum += xi;
        let s = sum / ((m + 1) as f64).sqrt();
        best = Some(best.map_or(s, |b: f64| b.max(s)));
    }
    best
}

fn scaled_sum(x: &[f64], mask: SubsetMask) -> Option<f64> {
    (!mask.is_empty()).then(|| mask.indices().map(|i| x[i]).sum::<f64>() / (mask.len() as f64).sqrt())
}

impl MotivatingRule {
    pub fn rejects(&self, x: &[f64], available: SubsetMask) -> bool {
        let full = SubsetMask::full(self.n);
        match self.kind {
            RuleKind::A1 => scaled_sum(x, full).is_some_and(|s| s > self.z),
            RuleKind::A2 => naive_best_statistic(x, available).is_some_and(|s| s > self.z),
            RuleKind::A3 => available == full && scaled_sum(x, full).is_some_and(|s| s > self.z),
            RuleKind::A4 => available.contains(self.statistic) && x[self.statistic] > self.z,
            RuleKind::A5 => scaled_sum(x, available).is_some_and(|s| s > self.z),
        }
    }

    /// Closed-form power at `θ`, where one exists.
    pub fn analytic_power(&self, theta: f64, config: &MotivatingConfig) -> Option<f64> {
        let n = self.n as f64;
        match self.kind {
            RuleKind::A1 => Some(norm_sf(self.z - n.sqrt() * theta)),
            RuleKind::A2 => None,
            RuleKind::A3 => {
                Some(config.mask_probability(SubsetMask::full(self.n)) * norm_sf(self.z - n.sqrt() * theta))
            }
            RuleKind::A4 => Some(config.availability[self.statistic] * norm_sf(self.z - theta)),
            RuleKind::A5 => Some(
                config
                    .size_distribution()
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, p)| p * norm_sf(self.z - (k as f64).sqrt() * theta))
                    .sum(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub theta: f64,
    pub rule: RuleKind,
    /// Analytic value where available, else the Monte-Carlo estimate.
    pub power: f64,
    /// `sqrt(power (1 - power) / reps)`.
    pub se: f64,
    pub mc: f64,
    pub analytic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub rules: Vec<RuleKind>,
    pub reps: usize,
    pub seed: u64,
    /// Grouped by `θ`, then in the order of `rules`.
    pub points: Vec<PowerPoint>,
}

impl PowerCurve {
    pub fn series(&self, rule: RuleKind) -> impl Iterator<Item = &PowerPoint> {
        self.points.iter().filter(move |p| p.rule == rule)
    }

    pub fn at(&self, theta_index: usize, rule: RuleKind) -> Option<&PowerPoint> {
        let k = self.rules.iter().position(|&r| r == rule)?;
        self.points.get(theta_index * self.rules.len() + k)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("theta,rule,power,se\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.theta, p.rule, p.power, p.se));
        }
        out
    }
}

/// Rejection rates of `kinds` over the `θ` grid. All rules share the draws
/// of `(J, X)` at a grid point; point `i` uses ChaCha stream `i`.
pub fn power_curve(kinds: &[RuleKind], config: &MotivatingConfig) -> Result<PowerCurve> {
    config.validate()?;
    if kinds.is_empty() {
        return Err(Error::Usage("at least one rule kind is required".into()));
    }
    let rules: Vec<MotivatingRule> = kinds.iter().map(|&k| make_rule(k, config)).collect::<Result<_>>()?;
    let thetas = config.theta.values();
    let n = config.n;
    let counts: Vec<Vec<u64>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let mut rng = stream_rng(config.seed, i as u64);
            let mut counts = vec![0u64; rules.len()];
            let mut x = vec![0.0; n];
            for _ in 0..config.reps {
                let mut available = SubsetMask::EMPTY;
                for (j, &p) in config.availability.iter().enumerate() {
                    if rng.random::<f64>() < p {
                        available = available.with(j);
                    }
                }
                for v in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = theta + z;
                }
                for (c, r) in counts.iter_mut().zip(&rules) {
                    *c += u64::from(r.rejects(&x, available));
                }
            }
            counts
        })
        .collect();

    let reps = config.reps as f64;
    let mut points = Vec::with_capacity(thetas.len() * rules.len());
    for (theta, row) in thetas.iter().zip(&counts) {
        for (rule, &c) in rules.iter().zip(row) {
            let mc = c as f64 / reps;
            let analytic = rule.analytic_power(*theta, config);
            let power = analytic.unwrap_or(mc);
            points.push(PowerPoint {
                theta: *theta,
                rule: rule.kind,
                power,
                se: binomial_se(power, config.reps),
                mc,
                analytic,
            });
        }
    }
    Ok(PowerCurve { rules: kinds.to_vec(), reps: config.reps, seed: config.seed, points })
}

/// Grid version of the setting: each statistic is cut at `edges`, the
/// null and the single prior atom are `N(0, I)`, and availability is
/// independent.
pub fn discretized_problem(config: &MotivatingConfig, edges: &[f64]) -> Result<ProblemSpec> {
    config.validate()?;
    let n = config.n;
    let model = SamplingModel::unit_gaussian(vec![0.0; n]);
    Ok(ProblemSpec {
        statistics: (0..n)
            .map(|i| StatisticSpec { name: Some(format!("x{}", i + 1)), axis: AxisSpec::Edges { edges: edges.to_vec() } })
            .collect(),
        null: model.clone(),
        signals: vec![SignalSpec::Model {
            atoms: vec![ThetaAtom { weight: 1.0, model }],
            availability: AvailabilityModel::Independent(config.availability.clone()),
        }],
        alpha: config.alpha,
        mc: McSettings { seed: config.seed, ..McSettings::default() },
    })
}

/// The naive rule on a grid: a cell rejects when the statistic at its lower
/// corner already reaches `z`, so the cell lies inside the continuous
/// rejection region.
pub fn naive_rule_table(config: &MotivatingConfig, grid: &Grid) -> Result<TestRuleTable> {
    let z = config.critical_value();
    let lower: Vec<Vec<f64>> = grid
        .axes()
        .iter()
        .map(|a| (0..a.len()).map(|c| a.open_bounds(c).0).collect())
        .collect();
    let mut x = vec![0.0; grid.dim()];
    TestRuleTable::from_fn(grid.layout(), |mask, coords| {
        for i in mask.indices() {
            x[i] = lower[i][coords[i]];
        }
        f64::from(u8::from(naive_best_statistic(&x, mask).is_some_and(|s| s >= z)))
    })
}
