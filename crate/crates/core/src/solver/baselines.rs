//! Fixed-granularity baseline solvers: the homogeneous fixed-step variant,
//! its Stackelberg price-feedback wrapper, and fixed two- and three-type
//! variants. All baselines share the physical parameters and differ only in
//! type granularity and step-size policy.

use crate::error::Result;
use crate::grid::{ChannelParams, FleetConfig, Grid};
use crate::leo::SnapshotTrace;

use super::pdhg::run_internal;
use super::{EquilibriumSolution, SolverConfig, StepMode};

/// Baseline identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Homogeneous solver, K = 1, fixed step product 0.99.
    GproxK1,
    /// GproxK1 inside an outer congestion-pricing feedback loop.
    SmfgK1,
    /// Two fixed types, adaptive steps.
    FixedK2,
    /// Three fixed types, adaptive steps.
    FixedK3,
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::GproxK1 => "gprox_k1",
            BaselineKind::SmfgK1 => "smfg_k1",
            BaselineKind::FixedK2 => "fixed_k2",
            BaselineKind::FixedK3 => "fixed_k3",
        }
    }
}

const SMFG_ROUNDS: usize = 10;
const SMFG_DAMPING: f64 = 0.5;

/// Solves a baseline by re-aggregating the fleet to the baseline's type
/// count (population-weighted parameter means, mixture initial densities)
/// and running the shared solver with the baseline's step policy.
pub fn baseline_solve(
    kind: BaselineKind,
    fleet: &FleetConfig,
    cfg: &SolverConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
) -> Result<EquilibriumSolution> {
    match kind {
        BaselineKind::GproxK1 => {
            let merged = fleet.merged(1, grid)?;
            let fixed = SolverConfig {
                step_mode: StepMode::Fixed(0.99),
                ..cfg.clone()
            };
            run_internal(&merged, &fixed, snapshots, grid, channel, None)
        }
        BaselineKind::SmfgK1 => {
            let merged = fleet.merged(1, grid)?;
            let fixed = SolverConfig {
                step_mode: StepMode::Fixed(0.99),
                ..cfg.clone()
            };
            // Leader posts a price; followers best-respond; the posted price
            // relaxes toward the realized congestion price.
            let mut posted: Vec<f64> = (0..grid.n_slices())
                .map(|j| {
                    let snap = snapshots.at_time(grid.time(j));
                    let b = crate::leo::bottleneck_bandwidth(snap)?;
                    Ok(cfg.kappa + cfg.mu / b)
                })
                .collect::<Result<_>>()?;
            let mut solution = None;
            for _ in 0..SMFG_ROUNDS {
                let sol = run_internal(&merged, &fixed, snapshots, grid, channel, Some(&posted))?;
                let realized = super::coupling_from_fields(
                    &sol.densities,
                    &sol.policies,
                    &sol.rate_fields,
                    &merged,
                    channel,
                    snapshots,
                    cfg,
                    grid,
                    0.0,
                    None,
                )?;
                for j in 0..grid.n_slices() {
                    posted[j] = (1.0 - SMFG_DAMPING) * posted[j] + SMFG_DAMPING * realized.price[j];
                }
                solution = Some(sol);
            }
            Ok(solution.expect("at least one SMFG round"))
        }
        BaselineKind::FixedK2 => {
            let merged = fleet.merged(2.min(fleet.k_types), grid)?;
            run_internal(&merged, cfg, snapshots, grid, channel, None)
        }
        BaselineKind::FixedK3 => {
            let merged = fleet.merged(3.min(fleet.k_types), grid)?;
            run_internal(&merged, cfg, snapshots, grid, channel, None)
        }
    }
}
