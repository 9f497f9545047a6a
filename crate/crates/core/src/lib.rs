//! Interference-aware structural outcome models over grouped units, with
//! exact and heuristic search for budgeted binary intervention plans that
//! minimize between-group disparity or maximize aggregate impact.

pub mod constraint;
pub mod error;
pub mod milp;
pub mod objective;
pub mod scenario;
pub mod scm;
pub mod solve;
pub mod synth;

pub use constraint::{check_feasibility, ConstraintSpec, FeasibilityReport, MarginEntry};
pub use error::{CoreError, Result};
pub use objective::{
    aggregate_impact, change_report, disparity, group_means, ChangeReport, ObjectiveSpec,
    PairConvention, Sense,
};
pub use scenario::{
    build_neighbor_structure, group_totals, load_scenario, observed_disparity, write_scenario,
    GroupSlice, InterventionSet, NeighborStructure, Scenario, ScenarioOptions,
};
pub use scm::{
    build_features, counterfactual_privilege, fit, fit_aggregate, load_model, predict, save_model,
    FitOptions, FittedModel, InterventionVector, OutcomeEquation,
};
pub use solve::{
    solve_branch_bound, solve_enumerate, solve_local_search, SolveOptions, SolveResult, SolveStats,
};
pub use synth::{gen_random, toy_career_fair, GroundTruth, RandomScenarioConfig};
