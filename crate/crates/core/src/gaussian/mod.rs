//! Gaussian experiments: the motivating rules with their power curves, and
//! the multi-arm design with its pre-analysis plan families.

pub mod casestudy;
pub mod design;
pub mod motivating;

pub use casestudy::{
    best_arms_map, case_study_power, lp_grid, optimal_rule, optimize_simple_pap, rejection_region, ArmCutoffSpec, BestArmsMap,
    CandidatePower, CaseStudyConfig, CaseStudyMc, CaseStudyResult, CutoffSearch, Family, FittedSpec, LpDiagnostics, LpGrid, MapSpec, RejectionRegion, Scenario,
    SimplePapSpec, StudySettings, SubsetCutoff, SubsetRate,
};
pub use design::{
    calibrate_critical, loglr_statistic, wald_statistic, GaussianDesign, Population, Sampler, Statistic,
    SubsetStatistics,
};
pub use motivating::{
    discretized_problem, make_rule, naive_best_statistic, naive_rule_table, power_curve, MotivatingConfig, MotivatingRule, PowerCurve, PowerPoint,
    RuleKind, ThetaGrid,
};
