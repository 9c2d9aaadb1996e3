//! Numerical toolkit for heterogeneous mean-field resource allocation in
//! large vehicle fleets.
//!
//! The crate covers the full pipeline:
//!
//! - [`grid`]: the discretized queue-time domain and the field/parameter
//!   records shared by everything else;
//! - [`transport`]: one-dimensional Wasserstein distances, the fleet
//!   heterogeneity measure, and empirical-rate experiments;
//! - [`granularity`]: the error decomposition, the closed-form optimal type
//!   count with unbalanced and backhaul corrections, and log-log fitting;
//! - [`leo`]: the temporal-graph backhaul snapshot model;
//! - [`stepsize`]: heterogeneity-aware primal-dual step adaptation;
//! - [`solver`]: the coupled HJB-FPK equilibrium solvers (primal-dual and
//!   the damped Picard cross-check) plus fixed-granularity baselines;
//! - [`sim`]: Monte Carlo fleet simulation and KPI extraction;
//! - [`config`]: the on-disk configuration format;
//! - [`export`]: CSV import/export of traces and results.

pub mod config;
pub mod error;
pub mod export;
pub mod granularity;
pub mod grid;
pub mod leo;
pub mod sim;
pub mod solver;
pub mod stepsize;
pub mod transport;

pub use error::{Error, Result};
pub use granularity::{
    continuous_kstar, dimension_exponents, exhaustive_kstar, fit_loglog_slope,
    kstar_heterogeneity_adjusted, kstar_unbalanced, leo_delta, min_error,
    min_error_nash_scale, reduced_error,
    select_type_count, ErrorModelParams, GranularityResult,
};
pub use grid::{
    make_grid, normalize_density, ChannelParams, DataRateProfile, Density, DualPotential,
    FleetConfig, Grid, Momentum, TypeParams,
};
pub use leo::{
    bottleneck_bandwidth, check_order_optimality_condition, delta_sat, generate_snapshots,
    phi_sat, LeoConfig, Snapshot, SnapshotTrace,
};
pub use sim::{compute_kpis, simulate_trial, KpiReport, MethodPolicies, TrialConfig};
pub use solver::baselines::{baseline_solve, BaselineKind};
pub use solver::nash::empirical_nash_gap;
pub use solver::operators::{dual_update, fpk_step, hjb_residual, CouplingTrace, PoissonSolver};
pub use solver::pdhg::{pdhg_run, pdhg_solve};
pub use solver::physics::{
    computational_price, mean_field_interference, optimal_power, sinr_rate,
};
pub use solver::picard::picard_solve;
pub use solver::{EquilibriumSolution, SolverConfig, StepMode};
pub use stepsize::{adapt_step, check_sufficient_condition, compute_c_h, StepSizeInputs, StepSizes};
pub use transport::{
    cdf_from_density, empirical_rate_experiment, heterogeneity_measure, w1_1d, w2_1d, Marginal,
    QuantileTable,
};
