//! Zeroth-order minimization of convex functions through an oracle that returns
//! `f(x) + ξ` with `|ξ| ≤ δ`.
//!
//! The crate provides synthetic problem families with known minimizers, noisy and
//! smoothed oracles, grid searches on intervals, boxes and simplices, restart
//! schedules driving a two-point base solver, upper-bound formulas for the maximum
//! admissible noise level, and a harness that measures that level empirically.

pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod problem;
pub mod reductions;

pub use error::{Error, Result};
pub use problem::{
    make_instance, BarycentricPoint, ClassParams, Exponent, FeasibleSet, Family, InstanceSpec,
    Objective, ProblemInstance, Simplex,
};
pub use grid::{
    grid_search_1d, grid_search_separable, probe_budget, simplex_grid_search, Grid1DConfig,
    SafetyMode, SimplexSearchConfig, SolveReport,
};
pub use harness::{compare_with_theory, measure_maln, Algorithm, AdversaryTier, MalnQuery, MalnReport};
pub use oracle::{
    mc_sample_count, regularized_oracle, smoothing_oracle, NoisePolicy, NoisyOracle, Oracle,
    SmoothingConfig,
};
pub use reductions::{
    base_solver, closed_form_delta, restart_solve, schedule_lipschitz_sg, schedule_smooth_sg, table1_bound,
    BaseSolverConfig, BoundClass, BoundInputs, RestartSchedule,
};
