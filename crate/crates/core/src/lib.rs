//! Optimal implementable hypothesis tests when an analyst may report only a
//! subset of the available statistics.

pub mod discretize;
pub mod error;
pub mod gaussian;
pub mod grid;
pub mod implementability;
pub mod lp;
mod mc;
pub mod model;
pub mod rule;
pub mod schema;
pub mod stats;
pub mod subset;

pub use discretize::{discretize_gaussian, Discretization, DiscretizationMethod, McSettings};
pub use error::{Error, Result};
pub use grid::{Axis, Grid, Layout, OutcomePoint, PartialOutcome};
pub use implementability::{
    analyst_best_subset, analyst_choose_plan, check_monotonicity, check_size_control, check_truthful_message,
    subset_maximum, worst_case_completion, ViolationKind, ViolationReport, Witness,
};
pub use lp::{
    build_lp, check_extremal_conditions, extremality_oracle, interim_expected_power, known_j_lr_test, optimal_pap,
    rationalizing_prior, solve_lp, verify_perturbation, ExtremalCondition, ExtremalReport, LpProblem, LpSolution,
    LpStatus, LrTest, PapSolution, SolverLog, Variable,
};
pub use model::{
    build_interim_prior, mixture_table, AvailabilityModel, DiscreteProblem, InterimPrior, SamplingModel, ThetaAtom,
};
pub use schema::{FieldError, ProblemSpec};
pub use rule::{RuleEntry, RuleJson, TestRuleTable};
pub use subset::{enumerate_subsets, SubsetMask, MAX_STATISTICS};
