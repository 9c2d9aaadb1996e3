//! K-type coupled HJB-FPK equilibrium solvers.
//!
//! [`pdhg::pdhg_solve`] is the primal-dual solver: per-type gradient steps
//! on the densities, pointwise momentum minimization through the optimal
//! power map, and an inverse-Laplacian preconditioned dual ascent, with
//! step sizes from the heterogeneity-aware adaptation rule.
//! [`picard::picard_solve`] is an independent damped fixed-point iteration
//! (backward value sweep + forward density rollout) used as a cross-check.

pub mod baselines;
pub mod nash;
pub mod operators;
pub mod pdhg;
pub mod physics;
pub mod picard;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{ChannelParams, Density, DualPotential, FleetConfig, Grid};
use crate::leo::SnapshotTrace;
use operators::CouplingTrace;

/// Step-size policy of the primal-dual loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// Heterogeneity-aware adaptation recomputed every iteration.
    Adaptive,
    /// Fixed product xi * varsigma; xi = varsigma = sqrt(product).
    Fixed(f64),
}

/// Solver configuration. Scale parameters convert the dimensionless step
/// sizes into field units; their defaults are calibrated on the reference
/// 50x60 grid so that products near one sit at the empirical stability
/// boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub step_mode: StepMode,
    /// Base computational price kappa.
    pub kappa: f64,
    /// Congestion price coefficient varrho.
    pub varrho: f64,
    /// Backhaul price coefficient mu.
    pub mu: f64,
    /// Safety margin eps of the adaptive rule.
    pub safety_margin: f64,
    /// Model Lipschitz constant L of the step-size correction.
    pub lipschitz_l: f64,
    /// Pairwise growth constant of the type-coupling bound (test hook).
    pub lipschitz_lb: f64,
    /// Primal gradient step in density units per unit defect.
    pub primal_scale: f64,
    /// Dual ascent step applied to the preconditioned continuity defect.
    pub dual_scale: f64,
    /// Residual level treated as divergence.
    pub divergence_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-3,
            step_mode: StepMode::Adaptive,
            kappa: 0.3,
            varrho: 3e-4,
            mu: 0.5,
            safety_margin: 0.01,
            lipschitz_l: 0.05,
            lipschitz_lb: 25.0,
            primal_scale: 2e-4,
            dual_scale: 1.0,
            divergence_cap: 1e6,
        }
    }
}

/// Per-iteration diagnostics, one row per solver iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub step_product: f64,
    pub xi: f64,
    pub h_k: f64,
    pub c_h: f64,
    pub delta_sat: f64,
}

/// Divergence diagnostics carried by a failed run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceInfo {
    pub iteration: usize,
    pub step_product: f64,
}

/// Converged (or reported) equilibrium of the K-type game.
#[derive(Debug, Clone)]
pub struct EquilibriumSolution {
    pub densities: Vec<Density>,
    /// Value-convention potentials with the terminal slice C q^2 exact.
    pub potentials: Vec<DualPotential>,
    /// Power policies in [0, P_max].
    pub policies: Vec<Array2<f64>>,
    /// Transmission rates (data units per second) under the policies.
    pub rate_fields: Vec<Array2<f64>>,
    pub residual_history: Vec<f64>,
    pub trace: Vec<IterationRecord>,
    pub iterations_used: usize,
    pub converged: bool,
    pub diverged: Option<DivergenceInfo>,
    /// Coupling fields of the final iterate.
    pub coupling: CouplingTrace,
}

impl EquilibriumSolution {
    /// Largest per-slice trapezoid mass error across types.
    pub fn max_mass_error(&self, grid: &Grid) -> f64 {
        self.densities
            .iter()
            .map(|d| d.max_mass_error(grid))
            .fold(0.0, f64::max)
    }

    /// Largest policy bound violation (negative is slack).
    pub fn max_policy_violation(&self, p_max: f64) -> f64 {
        self.policies
            .iter()
            .flat_map(|p| p.iter())
            .map(|&v| (v - p_max).max(-v))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Computes the coupling trace (price and interference per time slice) from
/// per-type densities and rate/policy fields.
#[allow(clippy::too_many_arguments)]
pub fn coupling_from_fields(
    densities: &[Density],
    policies: &[Array2<f64>],
    rates: &[Array2<f64>],
    fleet: &FleetConfig,
    channel: &ChannelParams,
    snapshots: &SnapshotTrace,
    cfg: &SolverConfig,
    grid: &Grid,
    i_sat: f64,
    price_override: Option<&[f64]>,
) -> Result<CouplingTrace> {
    let counts = fleet.class_counts();
    let h2 = channel.interference_gain_scale * channel.solver_gain();
    let gains = vec![h2; fleet.k_types];
    let mut price = Vec::with_capacity(grid.n_slices());
    let mut interference = Vec::with_capacity(grid.n_slices());
    for j in 0..grid.n_slices() {
        let snap = snapshots.at_time(grid.time(j));
        let bottleneck = crate::leo::bottleneck_bandwidth(snap)?;
        let i_j = physics::mean_field_interference(
            densities, policies, &counts, &gains, i_sat, grid, j,
        )?;
        let phi_j = match price_override {
            Some(p) => p[j],
            None => physics::computational_price(
                densities, rates, &fleet.proportions, bottleneck, cfg.kappa, cfg.varrho, cfg.mu,
                grid, j,
            )?,
        };
        price.push(phi_j);
        interference.push(i_j);
    }
    Ok(CouplingTrace {
        price,
        interference,
    })
}
