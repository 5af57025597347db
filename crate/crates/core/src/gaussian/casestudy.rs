//! Pre-analysis plan families for the multi-arm design and their expected
//! power `Σ_J P(J) · P_prior(reject | J)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::motivating::ThetaGrid;
use super::design::{calibrate_critical, calibration_seed, GaussianDesign, Population, Sampler, Statistic, SubsetStatistics};
use crate::discretize::{discretize_gaussian, McSettings};
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid};
use crate::lp::{optimal_pap, SolverLog};
use crate::mc::derive_seed;
use crate::model::{build_interim_prior, AvailabilityModel, DiscreteProblem, SamplingModel, ThetaAtom};
use crate::rule::{RuleJson, TestRuleTable};
use crate::stats::binomial_se;
use crate::subset::SubsetMask;

const TAG_NULL_CHECK: u64 = 1;
const TAG_PRIOR_SEARCH: u64 = 2;
const TAG_PRIOR_EVAL: u64 = 3;
const TAG_NULL_GRID: u64 = 4;
const TAG_PRIOR_GRID: u64 = 5;

/// Largest grid accepted for the optimal-plan program, in full cells.
pub const MAX_LP_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    OptimalLp,
    LrKnownJ,
    WaldFixedSubset,
    ArmSpecificCutoffs,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::OptimalLp, Family::LrKnownJ, Family::WaldFixedSubset, Family::ArmSpecificCutoffs];

    pub fn label(self) -> &'static str {
        match self {
            Family::OptimalLp => "optimal-lp",
            Family::LrKnownJ => "lr-known-j",
            Family::WaldFixedSubset => "wald-fixed-subset",
            Family::ArmSpecificCutoffs => "arm-specific-cutoffs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyMc {
    /// Null draws for critical values and joint size.
    pub calibration_reps: usize,
    /// Prior draws used to pick among candidate plans.
    pub search_reps: usize,
    /// Fresh draws for the reported power and size.
    pub eval_reps: usize,
    pub seed: u64,
}

impl Default for CaseStudyMc {
    fn default() -> Self {
        CaseStudyMc { calibration_reps: 1_000_000, search_reps: 200_000, eval_reps: 1_000_000, seed: 20_240_601 }
    }
}

/// Uniform grid per arm spanning `span_sds` null and prior predictive SDs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LpGrid {
    pub cells: usize,
    pub span_sds: f64,
}

impl Default for LpGrid {
    fn default() -> Self {
        LpGrid { cells: 24, span_sds: 4.0 }
    }
}

/// Singleton cutoffs on the `|t|` scale: a coarse pass over
/// `start..=stop` and a fine pass within one coarse step of the winner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutoffSearch {
    pub start: f64,
    pub stop: f64,
    pub coarse_step: f64,
    pub fine_step: f64,
}

impl Default for CutoffSearch {
    fn default() -> Self {
        CutoffSearch { start: 1.0, stop: 4.0, coarse_step: 0.1, fine_step: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct StudySettings {
    pub mc: CaseStudyMc,
    pub grid: LpGrid,
    pub search: CutoffSearch,
}

impl StudySettings {
    pub fn validate(&self) -> Result<()> {
        let m = &self.mc;
        if m.calibration_reps < super::design::MIN_CALIBRATION_REPS {
            return Err(Error::Usage(format!(
                "calibration_reps must be at least {}",
                super::design::MIN_CALIBRATION_REPS
            )));
        }
        if m.search_reps < 10_000 || m.eval_reps < 10_000 {
            return Err(Error::Usage("search_reps and eval_reps must be at least 10000".into()));
        }
        if self.grid.cells < 2 || !(self.grid.span_sds > 0.0) {
            return Err(Error::Usage("grid needs at least 2 cells and a positive span".into()));
        }
        let s = &self.search;
        if !(s.fine_step > 0.0 && s.coarse_step >= s.fine_step && s.stop >= s.start && s.start > 0.0) {
            return Err(Error::Usage("empty or malformed cutoff search grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub availability: AvailabilityModel,
    pub families: Vec<Family>,
}

/// Independent availability grids for the best-arms map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub p1: ThetaGrid,
    pub p2: ThetaGrid,
}

/// A bundled case study: one design evaluated under several availability
/// scenarios, plus an optional best-arms map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub design: GaussianDesign,
    pub alpha: f64,
    #[serde(flatten)]
    pub settings: StudySettings,
    pub scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapSpec>,
}

/// Registered subset and critical value of a single-statistic plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimplePapSpec {
    pub registered: SubsetMask,
    pub critical: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetCutoff {
    pub subset: SubsetMask,
    /// Threshold on the Wald statistic of `subset`.
    pub critical: f64,
}

/// Rejects when some reported subset's Wald statistic exceeds its cutoff;
/// subsets without a cutoff never reject on their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmCutoffSpec {
    pub cutoffs: Vec<SubsetCutoff>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedSpec {
    WaldFixedSubset(SimplePapSpec),
    LrKnownJ(SimplePapSpec),
    ArmSpecificCutoffs(ArmCutoffSpec),
    OptimalLp { edges: Vec<Vec<f64>>, rule: RuleJson },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetRate {
    pub subset: SubsetMask,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidatePower {
    pub registered: SubsetMask,
    pub critical: f64,
    /// `P(J' ⊆ J)`.
    pub availability: f64,
    /// `P_prior(W > c)` on the search draws.
    pub conditional_power: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpDiagnostics {
    pub objective: f64,
    pub mc_power: f64,
    pub mc_power_se: f64,
    pub cells: Vec<usize>,
    pub solver: SolverLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyResult {
    pub family: Family,
    pub spec: FittedSpec,
    pub power: f64,
    pub power_se: f64,
    /// Largest null rejection rate over reported subsets, on fresh draws.
    pub size: f64,
    pub size_se: f64,
    pub size_by_subset: Vec<SubsetRate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidatePower>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lp: Option<LpDiagnostics>,
}

/// Full-arm draws, row-major.
struct Draws {
    k: usize,
    data: Vec<f64>,
}

impl Draws {
    fn new(design: &GaussianDesign, population: Population, reps: usize, seed: u64) -> Result<Self> {
        let s = Sampler::new(design, population)?;
        Ok(Draws { k: s.arms(), data: s.sample(reps, seed) })
    }

    fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.k)
    }

    fn len(&self) -> usize {
        self.data.len() / self.k
    }

    fn rate(&self, stats: &SubsetStatistics, statistic: Statistic, critical: f64) -> f64 {
        self.rows().filter(|x| stats.eval_full(statistic, x) > critical).count() as f64 / self.len() as f64
    }
}

fn nonempty_masks(k: usize) -> Vec<SubsetMask> {
    (1..1u32 << k).map(SubsetMask).collect()
}

/// `P(J' ⊆ J)` from a mask-indexed pmf.
fn containment(pmf: &[f64], registered: SubsetMask) -> f64 {
    pmf.iter().enumerate().filter(|(m, _)| registered.is_subset_of(SubsetMask(*m as u32))).map(|(_, p)| p).sum()
}

fn prepare(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    alpha: f64,
    settings: &StudySettings,
) -> Result<Vec<f64>> {
    design.validate()?;
    settings.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Model(format!("alpha must be in (0, 1), got {alpha}")));
    }
    availability.pmf(design.arms())
}

fn calibration(settings: &StudySettings) -> McSettings {
    McSettings { draws: settings.mc.calibration_reps, seed: settings.mc.seed }
}

pub fn case_study_power(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    family: Family,
    alpha: f64,
    settings: &StudySettings,
) -> Result<CaseStudyResult> {
    match family {
        Family::OptimalLp => optimal_lp(design, availability, alpha, settings),
        Family::LrKnownJ => lr_known_j(design, availability, alpha, settings),
        Family::WaldFixedSubset | Family::ArmSpecificCutoffs => {
            optimize_simple_pap(design, availability, alpha, family, settings)
        }
    }
}

pub fn optimize_simple_pap(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    alpha: f64,
    family: Family,
    settings: &StudySettings,
) -> Result<CaseStudyResult> {
    match family {
        Family::WaldFixedSubset => wald_fixed_subset(design, availability, alpha, settings),
        Family::ArmSpecificCutoffs => arm_specific_cutoffs(design, availability, alpha, settings),
        _ => Err(Error::Usage(format!("{} is not a simple plan family", family.label()))),
    }
}

/// Critical values and search-draw conditional power of every nonempty
/// registered subset, in mask order.
fn wald_candidates(design: &GaussianDesign, alpha: f64, settings: &StudySettings) -> Result<Vec<(SubsetMask, f64, f64)>> {
    let prior = Draws::new(design, Population::Prior, settings.mc.search_reps, derive_seed(settings.mc.seed, TAG_PRIOR_SEARCH))?;
    nonempty_masks(design.arms())
        .into_iter()
        .map(|mask| {
            let c = calibrate_critical(design, Statistic::Wald, mask, alpha, calibration(settings))?;
            let stats = SubsetStatistics::new(design, mask)?;
            Ok((mask, c, prior.rate(&stats, Statistic::Wald, c)))
        })
        .collect()
}

fn pick_candidate(pmf: &[f64], table: &[(SubsetMask, f64, f64)]) -> (usize, Vec<CandidatePower>) {
    let cands: Vec<CandidatePower> = table
        .iter()
        .map(|&(registered, critical, conditional_power)| {
            let availability = containment(pmf, registered);
            CandidatePower { registered, critical, availability, conditional_power, power: availability * conditional_power }
        })
        .collect();
    let mut best = 0;
    for (i, c) in cands.iter().enumerate() {
        if c.power > cands[best].power {
            best = i;
        }
    }
    (best, cands)
}

fn wald_fixed_subset(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    alpha: f64,
    settings: &StudySettings,
) -> Result<CaseStudyResult> {
    let pmf = prepare(design, availability, alpha, settings)?;
    let table = wald_candidates(design, alpha, settings)?;
    let (best, candidates) = pick_candidate(&pmf, &table);
    let CandidatePower { registered, critical, availability: reach, .. } = candidates[best];
    let stats = SubsetStatistics::new(design, registered)?;

    let eval = Draws::new(design, Population::Prior, settings.mc.eval_reps, derive_seed(settings.mc.seed, TAG_PRIOR_EVAL))?;
    let conditional = eval.rate(&stats, Statistic::Wald, critical);
    let null = Draws::new(design, Population::Null, settings.mc.eval_reps, derive_seed(settings.mc.seed, TAG_NULL_CHECK))?;
    let null_rate = null.rate(&stats, Statistic::Wald, critical);
    let size_by_subset = nonempty_masks(design.arms())
        .into_iter()
        .map(|subset| SubsetRate { subset, rate: if registered.is_subset_of(subset) { null_rate } else { 0.0 } })
        .collect();
    Ok(CaseStudyResult {
        family: Family::WaldFixedSubset,
        spec: FittedSpec::WaldFixedSubset(SimplePapSpec { registered, critical }),
        power: reach * conditional,
        power_se: reach * binomial_se(conditional, eval.len()),
        size: null_rate,
        size_se: binomial_se(null_rate, null.len()),
        size_by_subset,
        candidates,
        lp: None,
    })
}

fn lr_known_j(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    alpha: f64,
    settings: &StudySettings,
) -> Result<CaseStudyResult> {
    prepare(design, availability, alpha, settings)?;
    let registered = availability
        .degenerate_at(design.arms())?
        .filter(|m| !m.is_empty())
        .ok_or_else(|| Error::Precondition("the likelihood-ratio plan needs availability known to be a nonempty set".into()))?;
    let critical = calibrate_critical(design, Statistic::Loglr, registered, alpha, calibration(settings))?;
    let stats = SubsetStatistics::new(design, registered)?;
    let eval = Draws::new(design, Population::Prior, settings.mc.eval_reps, derive_seed(settings.mc.seed, TAG_PRIOR_EVAL))?;
    let power = eval.rate(&stats, Statistic::Loglr, critical);
    let null = Draws::new(design, Population::Null, settings.mc.eval_reps, derive_seed(settings.mc.seed, TAG_NULL_CHECK))?;
    let size = null.rate(&stats, Statistic::Loglr, critical);
    let size_by_subset = nonempty_masks(design.arms())
        .into_iter()
        .map(|subset| SubsetRate { subset, rate: if registered.is_subset_of(subset) { size } else { 0.0 } })
        .collect();
    Ok(CaseStudyResult {
        family: Family::LrKnownJ,
        spec: FittedSpec::LrKnownJ(SimplePapSpec { registered, critical }),
        power,
        power_se: binomial_se(power, eval.len()),
        size,
        size_se: binomial_se(size, null.len()),
        size_by_subset,
        candidates: vec![],
        lp: None,
    })
}

/// Per-draw `|t_1|`, `|t_2|` and the pair Wald statistic.
struct PairStats {
    t1: Vec<f64>,
    t2: Vec<f64>,
    w: Vec<f64>,
    /// Draw indices by decreasing `w`.
    by_w: Vec<usize>,
}

impl PairStats {
    fn new(design: &GaussianDesign, draws: &Draws) -> Result<Self> {
        let s1 = SubsetStatistics::new(design, SubsetMask(1))?;
        let s2 = SubsetStatistics::new(design, SubsetMask(2))?;
        let s12 = SubsetStatistics::new(design, SubsetMask(3))?;
        let mut t1 = Vec::with_capacity(draws.len());
        let mut t2 = Vec::with_capacity(draws.len());
        let mut w = Vec::with_capacity(draws.len());
        for x in draws.rows() {
            t1.push(s1.eval_full(Statistic::Wald, x).sqrt());
            t2.push(s2.eval_full(Statistic::Wald, x).sqrt());
            w.push(s12.eval_full(Statistic::Wald, x));
        }
        let mut by_w: Vec<usize> = (0..w.len()).collect();
        by_w.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        Ok(PairStats { t1, t2, w, by_w })
    }

    fn len(&self) -> usize {
        self.w.len()
    }
}

/// Exceedance counts of `(|t_1|, |t_2|)` over a threshold lattice.
struct TailCounts {
    lattice: Vec<f64>,
    /// `above[i]`: draws with `|t_1| > lattice[i]`; likewise `above2`.
    above1: Vec<u64>,
    above2: Vec<u64>,
    /// `both[i * m + j]`: draws with `|t_1| > lattice[i]` and `|t_2| > lattice[j]`.
    both: Vec<u64>,
}

impl TailCounts {
    fn new(lattice: Vec<f64>, stats: &PairStats) -> Self {
        let m = lattice.len();
        // bin b: number of lattice points strictly below the value
        let bin = |v: f64| lattice.partition_point(|&l| l < v);
        let mut hist = vec![0u64; (m + 1) * (m + 1)];
        for (a, b) in stats.t1.iter().zip(&stats.t2) {
            hist[bin(*a) * (m + 1) + bin(*b)] += 1;
        }
        // suffix sums: s[a][b] = draws with bin1 >= a and bin2 >= b
        let w = m + 1;
        let mut s = vec![0u64; (w + 1) * (w + 1)];
        for a in (0..w).rev() {
            for b in (0..w).rev() {
                s[a * (w + 1) + b] =
                    hist[a * w + b] + s[(a + 1) * (w + 1) + b] + s[a * (w + 1) + b + 1] - s[(a + 1) * (w + 1) + b + 1];
            }
        }
        // |t| > lattice[i] exactly when its bin is at least i + 1
        let both = (0..m * m).map(|p| s[(p / m + 1) * (w + 1) + p % m + 1]).collect();
        let above1 = (0..m).map(|i| s[(i + 1) * (w + 1)]).collect();
        let above2 = (0..m).map(|j| s[j + 1]).collect();
        TailCounts { lattice, above1, above2, both }
    }

    /// Draws rejected by some singleton; `None` is an infinite cutoff.
    fn singleton_rejections(&self, i: Option<usize>, j: Option<usize>) -> u64 {
        let m = self.lattice.len();
        match (i, j) {
            (None, None) => 0,
            (Some(i), None) => self.above1[i],
            (None, Some(j)) => self.above2[j],
            (Some(i), Some(j)) => self.above1[i] + self.above2[j] - self.both[i * m + j],
        }
    }
}

fn pass(c: Option<f64>, v: f64) -> bool {
    c.is_none_or(|c| v <= c)
}

#[derive(Debug, Clone, Copy)]
struct CutoffCandidate {
    i: Option<usize>,
    j: Option<usize>,
    c12: f64,
    power: f64,
}

fn arm_specific_cutoffs(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    alpha: f64,
    settings: &StudySettings,
) -> Result<CaseStudyResult> {
    let pmf = prepare(design, availability, alpha, settings)?;
    if design.arms() != 2 {
        return Err(Error::Precondition("arm-specific cutoffs are searched for two-arm designs".into()));
    }
    let s = settings.search;
    let full = SubsetMask(3);
    let null = PairStats::new(
        design,
        &Draws { k: 2, data: Sampler::new(design, Population::Null)?.sample(settings.mc.calibration_reps, calibration_seed(settings.mc.seed, full)) },
    )?;
    let prior = PairStats::new(
        design,
        &Draws::new(design, Population::Prior, settings.mc.search_reps, derive_seed(settings.mc.seed, TAG_PRIOR_SEARCH))?,
    )?;

    // lattice in fine steps from one coarse step below start to one above stop
    let lo = ((s.start - s.coarse_step) / s.fine_step).round() as i64;
    let hi = ((s.stop + s.coarse_step) / s.fine_step).round() as i64;
    let lattice: Vec<f64> = (lo.max(0)..=hi).map(|v| v as f64 * s.fine_step).collect();
    let index_of = |v: f64| ((v / s.fine_step).round() as i64 - lo.max(0)) as usize;
    let null_tails = TailCounts::new(lattice.clone(), &null);
    let prior_tails = TailCounts::new(lattice.clone(), &prior);
    let budget = (alpha * null.len() as f64).floor() as u64;
    let nprior = prior.len() as f64;

    let evaluate = |i: Option<usize>, j: Option<usize>| -> Option<CutoffCandidate> {
        let singles = null_tails.singleton_rejections(i, j);
        let room = budget.checked_sub(singles)?;
        let (c1, c2) = (i.map(|i| lattice[i]), j.map(|j| lattice[j]));
        // smallest pair cutoff keeping the full-report size within budget
        let mut kept = 0u64;
        let mut c12 = 0.0;
        for &d in &null.by_w {
            if pass(c1, null.t1[d]) && pass(c2, null.t2[d]) {
                if kept == room {
                    c12 = null.w[d];
                    break;
                }
                kept += 1;
            }
        }
        let mut pair_only = 0u64;
        for &d in &prior.by_w {
            if prior.w[d] <= c12 {
                break;
            }
            if pass(c1, prior.t1[d]) && pass(c2, prior.t2[d]) {
                pair_only += 1;
            }
        }
        let p1 = i.map_or(0, |i| prior_tails.above1[i]) as f64 / nprior;
        let p2 = j.map_or(0, |j| prior_tails.above2[j]) as f64 / nprior;
        let pany = (prior_tails.singleton_rejections(i, j) + pair_only) as f64 / nprior;
        let power = pmf[1] * p1 + pmf[2] * p2 + pmf[3] * pany;
        Some(CutoffCandidate { i, j, c12, power })
    };
    let best_of = |grid: Vec<(Option<usize>, Option<usize>)>| -> Option<CutoffCandidate> {
        let evaluated: Vec<Option<CutoffCandidate>> = grid.par_iter().map(|&(i, j)| evaluate(i, j)).collect();
        evaluated.into_iter().flatten().fold(None, |best, c| match best {
            Some(b) if b.power >= c.power => Some(b),
            _ => Some(c),
        })
    };

    let mut coarse: Vec<Option<usize>> = Vec::new();
    let mut v = s.start;
    while v <= s.stop + 1e-9 {
        coarse.push(Some(index_of(v)));
        v += s.coarse_step;
    }
    coarse.push(None);
    let pairs = |a: &[Option<usize>], b: &[Option<usize>]| -> Vec<(Option<usize>, Option<usize>)> {
        a.iter().flat_map(|&i| b.iter().map(move |&j| (i, j))).collect()
    };
    let first = best_of(pairs(&coarse, &coarse)).ok_or_else(|| Error::Infeasible)?;
    let reach = ((s.coarse_step / s.fine_step).round() as i64).max(0);
    let around = |c: Option<usize>| -> Vec<Option<usize>> {
        match c {
            None => vec![None],
            Some(c) => (-reach..=reach)
                .map(|d| c as i64 + d)
                .filter(|&x| x >= 0 && (x as usize) < lattice.len())
                .map(|x| Some(x as usize))
                .collect(),
        }
    };
    let fine = best_of(pairs(&around(first.i), &around(first.j))).unwrap_or(first);
    let best = if fine.power > first.power { fine } else { first };

    let (c1, c2) = (best.i.map(|i| lattice[i]), best.j.map(|j| lattice[j]));
    let mut cutoffs = Vec::new();
    if let Some(c) = c1 {
        cutoffs.push(SubsetCutoff { subset: SubsetMask(1), critical: c * c });
    }
    if let Some(c) = c2 {
        cutoffs.push(SubsetCutoff { subset: SubsetMask(2), critical: c * c });
    }
    cutoffs.push(SubsetCutoff { subset: full, critical: best.c12 });
    let spec = ArmCutoffSpec { cutoffs };

    let eval = Draws::new(design, Population::Prior, settings.mc.eval_reps, derive_seed(settings.mc.seed, TAG_PRIOR_EVAL))?;
    let check = Draws::new(design, Population::Null, settings.mc.eval_reps, derive_seed(settings.mc.seed, TAG_NULL_CHECK))?;
    let masks = nonempty_masks(2);
    let rates = |d: &Draws| -> Result<Vec<f64>> {
        let stats = PairStats::new(design, d)?;
        let n = stats.len() as f64;
        let mut r = [0u64; 3];
        for k in 0..stats.len() {
            let r1 = !pass(c1, stats.t1[k]);
            let r2 = !pass(c2, stats.t2[k]);
            r[0] += u64::from(r1);
            r[1] += u64::from(r2);
            r[2] += u64::from(r1 || r2 || stats.w[k] > best.c12);
        }
        Ok(r.iter().map(|&c| c as f64 / n).collect())
    };
    let power_rates = rates(&eval)?;
    let power: f64 = masks.iter().zip(&power_rates).map(|(m, r)| pmf[m.index()] * r).sum();
    let null_rates = rates(&check)?;
    let size = null_rates.iter().copied().fold(0.0, f64::max);
    Ok(CaseStudyResult {
        family: Family::ArmSpecificCutoffs,
        spec: FittedSpec::ArmSpecificCutoffs(spec),
        power,
        power_se: binomial_se(power, eval.len()),
        size,
        size_se: binomial_se(size, check.len()),
        size_by_subset: masks.iter().zip(null_rates).map(|(&subset, rate)| SubsetRate { subset, rate }).collect(),
        candidates: vec![],
        lp: None,
    })
}

/// Grid spanning `span_sds` SDs of both the null and the prior predictive
/// around each arm.
pub fn lp_grid(design: &GaussianDesign, spec: LpGrid) -> Result<Grid> {
    let full = SubsetMask::full(design.arms());
    let s0 = design.s0(full);
    let s = design.s(full);
    let axes = (0..design.arms())
        .map(|i| {
            let (sd0, sd) = (s0[(i, i)].sqrt(), s[(i, i)].sqrt());
            let lo = (-spec.span_sds * sd0).min(design.mu[i] - spec.span_sds * sd);
            let hi = (spec.span_sds * sd0).max(design.mu[i] + spec.span_sds * sd);
            Axis::uniform(lo, hi, spec.cells)
        })
        .collect::<Result<Vec<_>>>()?;
    Grid::new(axes)
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn optimal_lp(
    design: &GaussianDesign,
    availability: &AvailabilityModel,
    alpha: f64,
    settings: &StudySettings,
) -> Result<CaseStudyResult> {
    let pmf = prepare(design, availability, alpha, settings)?;
    let k = design.arms();
    let cells = settings.grid.cells.checked_pow(k as u32).unwrap_or(usize::MAX);
    if cells > MAX_LP_CELLS {
        return Err(Error::InstanceTooLarge(format!("{cells} grid cells exceed the limit of {MAX_LP_CELLS}")));
    }
    let grid = lp_grid(design, settings.grid)?;
    let full = SubsetMask::full(k);
    let seed = settings.mc.seed;
    let draws = settings.mc.calibration_reps;
    let null = discretize_gaussian(
        &vec![0.0; k],
        &matrix_rows(&design.s0(full)),
        &grid,
        McSettings { draws, seed: derive_seed(seed, TAG_NULL_GRID) },
    )?
    .table;
    let atom = ThetaAtom { weight: 1.0, model: SamplingModel::Gaussian { mean: design.mu.clone(), covariance: matrix_rows(&design.s(full)) } };
    let prior = build_interim_prior(
        0,
        &[atom],
        &AvailabilityModel::Explicit(pmf.clone()),
        &grid,
        McSettings { draws, seed: derive_seed(seed, TAG_PRIOR_GRID) },
    )?;
    let problem = DiscreteProblem::new(grid.clone(), null, vec![prior], alpha)?;
    let sol = optimal_pap(&problem, 0, alpha)?;

    let layout = grid.layout();
    let slice = sol.rule.slice(0)?.to_vec();
    let masks: Vec<SubsetMask> = (0..layout.num_masks() as u32).map(SubsetMask).collect();
    let value = |x: &[f64], mask: SubsetMask| slice[layout.slot(mask, &grid.locate(x).0)];
    let eval = Draws::new(design, Population::Prior, settings.mc.eval_reps, derive_seed(seed, TAG_PRIOR_EVAL))?;
    let mc_power =
        eval.rows().map(|x| masks.iter().map(|&m| pmf[m.index()] * value(x, m)).sum::<f64>()).sum::<f64>() / eval.len() as f64;
    let check = Draws::new(design, Population::Null, settings.mc.eval_reps, derive_seed(seed, TAG_NULL_CHECK))?;
    let size_by_subset: Vec<SubsetRate> = nonempty_masks(k)
        .into_iter()
        .map(|subset| SubsetRate {
            subset,
            rate: check.rows().map(|x| value(x, subset)).sum::<f64>() / check.len() as f64,
        })
        .collect();
    let size = size_by_subset.iter().map(|r| r.rate).fold(0.0, f64::max);
    let edges = grid.axes().iter().map(|a| a.edges().to_vec()).collect();
    Ok(CaseStudyResult {
        family: Family::OptimalLp,
        spec: FittedSpec::OptimalLp { edges, rule: sol.rule.to_json() },
        power: sol.power,
        power_se: binomial_se(mc_power, eval.len()),
        size,
        size_se: binomial_se(size, check.len()),
        size_by_subset,
        candidates: vec![],
        lp: Some(LpDiagnostics {
            objective: sol.power,
            mc_power,
            mc_power_se: binomial_se(mc_power, eval.len()),
            cells: grid.sizes(),
            solver: sol.log,
        }),
    })
}

/// Rule table of an optimal plan returned in a [`CaseStudyResult`].
pub fn optimal_rule(result: &CaseStudyResult) -> Result<(Grid, TestRuleTable)> {
    let FittedSpec::OptimalLp { edges, rule } = &result.spec else {
        return Err(Error::Usage("result does not hold an optimal plan".into()));
    };
    let grid = Grid::new(edges.iter().map(|e| Axis::from_edges(e.clone())).collect::<Result<_>>()?)?;
    let table = TestRuleTable::from_json(rule, grid.layout())?;
    Ok((grid, table))
}

/// Rejection probability of a fitted plan over a square of two-arm
/// `t`-statistics, for one reported subset. Row `i` holds `t1[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRegion {
    pub reported: SubsetMask,
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
    pub reject: Vec<Vec<f64>>,
}

enum Evaluator {
    Simple { registered: SubsetMask, statistic: Statistic, stats: SubsetStatistics, critical: f64 },
    Cutoffs(Vec<(SubsetMask, SubsetStatistics, f64)>),
    Table { grid: Grid, slice: Vec<f64> },
}

impl Evaluator {
    fn new(design: &GaussianDesign, spec: &FittedSpec) -> Result<Self> {
        Ok(match spec {
            FittedSpec::WaldFixedSubset(p) | FittedSpec::LrKnownJ(p) => Evaluator::Simple {
                registered: p.registered,
                statistic: if matches!(spec, FittedSpec::LrKnownJ(_)) { Statistic::Loglr } else { Statistic::Wald },
                stats: SubsetStatistics::new(design, p.registered)?,
                critical: p.critical,
            },
            FittedSpec::ArmSpecificCutoffs(a) => Evaluator::Cutoffs(
                a.cutoffs
                    .iter()
                    .map(|c| Ok((c.subset, SubsetStatistics::new(design, c.subset)?, c.critical)))
                    .collect::<Result<_>>()?,
            ),
            FittedSpec::OptimalLp { edges, rule } => {
                let grid = Grid::new(edges.iter().map(|e| Axis::from_edges(e.clone())).collect::<Result<_>>()?)?;
                let table = TestRuleTable::from_json(rule, grid.layout())?;
                let slice = table.slice(0)?.to_vec();
                Evaluator::Table { grid, slice }
            }
        })
    }

    fn value(&self, x: &[f64], reported: SubsetMask) -> f64 {
        let hit = |b: bool| f64::from(u8::from(b));
        match self {
            Evaluator::Simple { registered, statistic, stats, critical } => {
                hit(registered.is_subset_of(reported) && stats.eval_full(*statistic, x) > *critical)
            }
            Evaluator::Cutoffs(cs) => hit(
                cs.iter().any(|(m, st, c)| m.is_subset_of(reported) && st.eval_full(Statistic::Wald, x) > *c),
            ),
            Evaluator::Table { grid, slice } => slice[grid.layout().slot(reported, &grid.locate(x).0)],
        }
    }
}

/// Evaluates `spec` on a `points × points` lattice over `[-extent, extent]²`
/// in null-standardized units.
pub fn rejection_region(
    design: &GaussianDesign,
    spec: &FittedSpec,
    reported: SubsetMask,
    extent: f64,
    points: usize,
) -> Result<RejectionRegion> {
    design.validate()?;
    if design.arms() != 2 {
        return Err(Error::Precondition("rejection regions are drawn for two-arm designs".into()));
    }
    if !reported.is_subset_of(SubsetMask::full(2)) {
        return Err(Error::Usage(format!("{reported} is not a subset of the arms")));
    }
    if !(extent > 0.0 && extent.is_finite()) || !(2..=401).contains(&points) {
        return Err(Error::Usage("region needs a positive extent and 2..=401 points".into()));
    }
    let eval = Evaluator::new(design, spec)?;
    let s0 = design.s0(SubsetMask::full(2));
    let sd = [s0[(0, 0)].sqrt(), s0[(1, 1)].sqrt()];
    let ticks: Vec<f64> = (0..points).map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64).collect();
    let reject = ticks
        .iter()
        .map(|&a| ticks.iter().map(|&b| eval.value(&[a * sd[0], b * sd[1]], reported)).collect())
        .collect();
    Ok(RejectionRegion { reported, t1: ticks.clone(), t2: ticks, reject })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestArmsMap {
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    /// Winning registered subset, `p1` outer and `p2` inner.
    pub subsets: Vec<SubsetMask>,
    pub candidates: Vec<CandidatePower>,
}

impl BestArmsMap {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p1,p2,subset\n");
        let mut it = self.subsets.iter();
        for a in &self.p1 {
            for b in &self.p2 {
                let s = it.next().expect("one subset per grid point");
                out.push_str(&format!("{a},{b},\"{s}\"\n"));
            }
        }
        out
    }
}

/// Best registered subset of the fixed-subset Wald family at each pair of
/// independent availability probabilities.
pub fn best_arms_map(
    design: &GaussianDesign,
    alpha: f64,
    p1: &[f64],
    p2: &[f64],
    settings: &StudySettings,
) -> Result<BestArmsMap> {
    if design.arms() != 2 {
        return Err(Error::Precondition("the best-arms map is drawn for two-arm designs".into()));
    }
    if p1.iter().chain(p2).any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Model("availability probabilities must lie in [0, 1]".into()));
    }
    prepare(design, &AvailabilityModel::Independent(vec![1.0, 1.0]), alpha, settings)?;
    let table = wald_candidates(design, alpha, settings)?;
    let mut subsets = Vec::with_capacity(p1.len() * p2.len());
    for &a in p1 {
        for &b in p2 {
            let pmf = AvailabilityModel::Independent(vec![a, b]).pmf(2)?;
            let (best, cands) = pick_candidate(&pmf, &table);
            subsets.push(cands[best].registered);
        }
    }
    let (_, candidates) = pick_candidate(&AvailabilityModel::Independent(vec![1.0, 1.0]).pmf(2)?, &table);
    Ok(BestArmsMap { p1: p1.to_vec(), p2: p2.to_vec(), subsets, candidates })
}
