//! Operations shared by the command line and the service. Every output is
//! a pure function of its input document.

use serde::{Deserialize, Serialize};

use pap_core::gaussian::{
    best_arms_map, case_study_power, power_curve, rejection_region, BestArmsMap, CaseStudyConfig, CaseStudyMc,
    CaseStudyResult, CutoffSearch, Family, GaussianDesign, LpGrid, MotivatingConfig, PowerCurve, RejectionRegion,
    RuleKind, StudySettings,
};
use pap_core::lp::ExtremalCondition;
use pap_core::{
    check_extremal_conditions, check_monotonicity, check_size_control, check_truthful_message, optimal_pap,
    AvailabilityModel, ProblemSpec, RuleJson, SolverLog, SubsetMask, TestRuleTable, ViolationReport,
};

use crate::error::{AppError, ErrorKind};

/// Largest number of statistics accepted by the instance guard.
pub const MAX_GUARDED_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalitySummary {
    pub is_extremal: bool,
    pub violated: Option<ExtremalCondition>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub signal: usize,
    pub alpha: f64,
    pub power: f64,
    pub extremality: ExtremalitySummary,
    pub solver: SolverLog,
    pub rule: RuleJson,
}

/// Rejects problems with more than [`MAX_GUARDED_DIM`] statistics or more
/// than `max_cells` full cells.
pub fn guard_problem(spec: &ProblemSpec, max_cells: usize) -> Result<(), AppError> {
    if spec.dim() > MAX_GUARDED_DIM {
        return Err(AppError::new(
            ErrorKind::TooLarge,
            format!("{} statistics exceed the limit of {MAX_GUARDED_DIM}", spec.dim()),
        )
        .at("statistics"));
    }
    if spec.cells() > max_cells {
        return Err(AppError::new(
            ErrorKind::TooLarge,
            format!("{} grid cells exceed the limit of {max_cells}", spec.cells()),
        )
        .at("statistics"));
    }
    Ok(())
}

pub fn solve(spec: &ProblemSpec, signal: usize) -> Result<SolveOutput, AppError> {
    let problem = spec.build()?;
    if signal >= problem.priors().len() {
        return Err(AppError::usage(format!("signal {signal} not in 0..{}", problem.priors().len())).at("signal"));
    }
    let sol = optimal_pap(&problem, signal, spec.alpha)?;
    let report = check_extremal_conditions(&sol.rule, &problem)?;
    Ok(SolveOutput {
        signal,
        alpha: spec.alpha,
        power: sol.power,
        extremality: ExtremalitySummary { is_extremal: report.is_extremal, violated: report.violated, q: report.q },
        solver: sol.log,
        rule: sol.rule.to_json(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutput {
    pub alpha: f64,
    pub passed: bool,
    pub size: ViolationReport,
    pub monotonicity: ViolationReport,
    pub truthful_message: ViolationReport,
}

pub fn check(spec: &ProblemSpec, rule: &RuleJson, tol: f64) -> Result<CheckOutput, AppError> {
    let problem = spec.build()?;
    let rule = TestRuleTable::from_json(rule, problem.layout().clone()).map_err(|e| AppError::from(e).at("rule"))?;
    let size = check_size_control(&rule, &problem, spec.alpha, tol)?;
    let monotonicity = check_monotonicity(&rule, &problem, tol)?;
    let truthful_message = check_truthful_message(&rule, &problem, tol)?;
    Ok(CheckOutput {
        alpha: spec.alpha,
        passed: size.passed() && monotonicity.passed() && truthful_message.passed(),
        size,
        monotonicity,
        truthful_message,
    })
}

pub fn power(config: &MotivatingConfig, kinds: &[RuleKind]) -> Result<PowerCurve, AppError> {
    if kinds.is_empty() {
        return Err(AppError::usage("at least one rule kind is required").at("kinds"));
    }
    Ok(power_curve(kinds, config)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub name: String,
    pub availability: AvailabilityModel,
    pub results: Vec<CaseStudyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyOutput {
    pub alpha: f64,
    pub scenarios: Vec<ScenarioOutput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<BestArmsMap>,
}

pub fn casestudy(config: &CaseStudyConfig) -> Result<CaseStudyOutput, AppError> {
    let scenarios = config
        .scenarios
        .iter()
        .enumerate()
        .map(|(i, sc)| {
            let results = sc
                .families
                .iter()
                .map(|&f| {
                    case_study_power(&config.design, &sc.availability, f, config.alpha, &config.settings)
                        .map_err(|e| AppError::from(e).at(format!("scenarios[{i}]")))
                })
                .collect::<Result<_, _>>()?;
            Ok(ScenarioOutput { name: sc.name.clone(), availability: sc.availability.clone(), results })
        })
        .collect::<Result<_, AppError>>()?;
    let map = config
        .map
        .as_ref()
        .map(|m| best_arms_map(&config.design, config.alpha, &m.p1.values(), &m.p2.values(), &config.settings))
        .transpose()
        .map_err(|e| AppError::from(e).at("map"))?;
    Ok(CaseStudyOutput { alpha: config.alpha, scenarios, map })
}

/// Lattice for the rejection-region heatmaps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionRequest {
    pub extent: f64,
    pub points: usize,
}

/// One design, one availability model, one plan family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyRequest {
    pub design: GaussianDesign,
    pub availability: AvailabilityModel,
    pub family: Family,
    pub alpha: f64,
    #[serde(default)]
    pub mc: CaseStudyMc,
    #[serde(default)]
    pub grid: LpGrid,
    #[serde(default)]
    pub search: CutoffSearch,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyResponse {
    #[serde(flatten)]
    pub result: CaseStudyResult,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RejectionRegion>,
}

pub fn guard_casestudy(req: &CaseStudyRequest, max_cells: usize) -> Result<(), AppError> {
    let arms = req.design.mu.len();
    if arms > MAX_GUARDED_DIM {
        return Err(AppError::new(ErrorKind::TooLarge, format!("{arms} arms exceed the limit of {MAX_GUARDED_DIM}"))
            .at("design.mu"));
    }
    if req.family == Family::OptimalLp {
        let cells = req.grid.cells.checked_pow(arms as u32).unwrap_or(usize::MAX);
        if cells > max_cells {
            return Err(AppError::new(ErrorKind::TooLarge, format!("{cells} grid cells exceed the limit of {max_cells}"))
                .at("grid.cells"));
        }
    }
    Ok(())
}

pub fn casestudy_single(req: &CaseStudyRequest) -> Result<CaseStudyResponse, AppError> {
    let settings = StudySettings { mc: req.mc, grid: req.grid, search: req.search };
    let result = case_study_power(&req.design, &req.availability, req.family, req.alpha, &settings)?;
    let regions = match req.region {
        None => vec![],
        Some(r) => (1..1u32 << req.design.mu.len())
            .map(|m| rejection_region(&req.design, &result.spec, SubsetMask(m), r.extent, r.points))
            .collect::<Result<_, _>>()
            .map_err(|e| AppError::from(e).at("region"))?,
    };
    Ok(CaseStudyResponse { result, regions })
}
