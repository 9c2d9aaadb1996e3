//! Primal-dual solver for the K-type equilibrium.
//!
//! Each iteration freezes the coupling fields (price, interference) at the
//! previous iterate, adapts the step product to the current heterogeneity,
//! then per type: a gradient step on the density iterate against the
//! transported dual, pointwise momentum minimization through the optimal
//! power map, overrelaxation, and a dual move combining the
//! inverse-Laplacian preconditioned continuity correction with a
//! value-consistency relaxation toward the implicit backward sweep at the
//! frozen coupling. The step product plays the damping role: products near
//! one leave the coupled price/interference feedback essentially undamped,
//! which is exactly where heterogeneous fleets lose stability.
//!
//! Iteration stops when the largest per-type HJB residual falls below the
//! tolerance. Reported densities are the forward FPK rollout under the
//! final policies, so the output is exactly density-consistent.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::grid::{normalize_density, ChannelParams, Density, DualPotential, FleetConfig, Grid};
use crate::leo::SnapshotTrace;
use crate::stepsize::{adapt_step, StepSizeInputs, StepSizes};

use super::operators::{
    dual_update, evaluate_potential, fpk_rollout, implicit_value_sweep, PoissonSolver, CFL_LIMIT,
};
use super::physics::d_dq_centered;
use super::{
    coupling_from_fields, DivergenceInfo, EquilibriumSolution, IterationRecord, SolverConfig,
    StepMode,
};

/// Runs the primal-dual iteration and reports the outcome, treating
/// divergence as a reported state rather than an error.
pub fn pdhg_run(
    fleet: &FleetConfig,
    cfg: &SolverConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
) -> Result<EquilibriumSolution> {
    run_internal(fleet, cfg, snapshots, grid, channel, None)
}

/// As [`pdhg_run`], but a diverged run is returned as an error carrying the
/// iteration index and the step product in force.
pub fn pdhg_solve(
    fleet: &FleetConfig,
    cfg: &SolverConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
) -> Result<EquilibriumSolution> {
    let sol = pdhg_run(fleet, cfg, snapshots, grid, channel)?;
    if let Some(info) = sol.diverged {
        return Err(Error::Divergence {
            iteration: info.iteration,
            step_product: info.step_product,
            detail: "NaN/Inf field entry or runaway residual".into(),
        });
    }
    Ok(sol)
}

/// Entry point shared with the Stackelberg baseline: an optional posted
/// price trace replaces the endogenous congestion price.
pub(crate) fn run_internal(
    fleet: &FleetConfig,
    cfg: &SolverConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
    price_override: Option<&[f64]>,
) -> Result<EquilibriumSolution> {
    channel.validate()?;
    if let StepMode::Fixed(product) = cfg.step_mode {
        if !(product > 0.0 && product < 1.0) {
            return Err(Error::Config(format!(
                "fixed step product must lie in (0,1), got {product}"
            )));
        }
    }
    let k = fleet.k_types;
    let n_q = grid.n_q;
    let n_s = grid.n_slices();

    // The rollout is explicit; verify the CFL budget once against the
    // largest attainable drift.
    let scale = drift_scale(fleet, channel);
    let advection = scale * grid.dt / grid.dq;
    let diffusion = fleet.sigma_max().powi(2) * grid.dt / (grid.dq * grid.dq);
    if advection + diffusion > CFL_LIMIT {
        return Err(Error::CflViolation {
            advection,
            diffusion,
            total: advection + diffusion,
            limit: CFL_LIMIT,
        });
    }

    let initial_columns: Vec<Array1<f64>> = fleet
        .initial_densities
        .iter()
        .map(|p| {
            let d = Density::from_initial_profile(grid, p)?;
            Ok(d.slice(0).to_owned())
        })
        .collect::<Result<_>>()?;

    // Density iterates (primal variable of the gradient step) start as the
    // time-broadcast initial profiles.
    let mut iterate_densities: Vec<Density> = fleet
        .initial_densities
        .iter()
        .map(|p| Density::from_initial_profile(grid, p))
        .collect::<Result<_>>()?;
    let mut momenta: Vec<Array2<f64>> = vec![Array2::zeros((n_q, n_s)); k];

    // Warm start: value sweep per type at the uncoupled price; the
    // policy-consistent density path follows from it.
    let zero_fields = vec![Array2::zeros((n_q, n_s)); k];
    let init_coupling = coupling_from_fields(
        &iterate_densities,
        &zero_fields,
        &zero_fields,
        fleet,
        channel,
        snapshots,
        cfg,
        grid,
        0.0,
        price_override,
    )?;
    let mut potentials: Vec<Array2<f64>> = (0..k)
        .map(|t| implicit_value_sweep(&init_coupling, &fleet.types[t], grid, channel, None))
        .collect();
    let mut policies: Vec<Array2<f64>> = Vec::with_capacity(k);
    let mut rates: Vec<Array2<f64>> = Vec::with_capacity(k);
    let mut path_densities: Vec<Density> = Vec::with_capacity(k);
    for t in 0..k {
        let eval =
            evaluate_potential(&potentials[t], &init_coupling, &fleet.types[t], grid, channel);
        path_densities.push(fpk_rollout(
            &fleet.initial_densities[t],
            &eval.drift,
            fleet.types[t].sigma,
            grid,
        )?);
        policies.push(eval.policy);
        rates.push(eval.rate);
    }
    let mut grad_max_running: Vec<f64> = potentials
        .iter()
        .map(|phi| sup_state_gradient(phi, grid))
        .collect();

    // Poisson metric: the state axis weighed by the drift scale puts the
    // continuity symbol on an O(1) footing against the preconditioner.
    let poisson = PoissonSolver::new(grid, scale * scale, 1.0);

    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut residual_history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut diverged = None;
    let mut iterations_used = 0;
    let n_windows = snapshots.snapshots.len();
    let mut coupling_state: Option<super::operators::CouplingTrace> = None;

    for iter in 1..=cfg.max_iterations {
        iterations_used = iter;
        // Coupling from the previous iterate's policy-consistent path.
        let fresh_coupling = coupling_from_fields(
            &path_densities,
            &policies,
            &rates,
            fleet,
            channel,
            snapshots,
            cfg,
            grid,
            0.0,
            price_override,
        )?;

        // Step sizes; the snapshot pair advances with the iteration index
        // and settles on the final window.
        let prev_snap = &snapshots.snapshots[(iter - 1).min(n_windows - 1)];
        let curr_snap = &snapshots.snapshots[iter.min(n_windows - 1)];
        let steps = match cfg.step_mode {
            StepMode::Fixed(product) => StepSizes {
                xi: product.sqrt(),
                varsigma: product.sqrt(),
                product,
                c_h: 0.0,
                h_k: 0.0,
            },
            StepMode::Adaptive => adapt_step(&StepSizeInputs {
                densities: &path_densities,
                grid,
                dual_gradients: &grad_max_running,
                lipschitz_l: cfg.lipschitz_l,
                horizon_t: grid.horizon_t,
                safety_margin: cfg.safety_margin,
                prev_snapshot: prev_snap,
                curr_snapshot: curr_snap,
                mu: cfg.mu,
            })?,
        };
        let delta_sat = crate::leo::delta_sat(prev_snap, curr_snap, cfg.mu)?;

        // The dual step also paces the coupling memory: products near one
        // push the fresh coupling through undamped, smaller products damp
        // the lagged feedback loop.
        let coupling = match coupling_state.take() {
            None => fresh_coupling,
            Some(prev) => {
                let w = steps.varsigma.min(1.0);
                super::operators::CouplingTrace {
                    price: prev
                        .price
                        .iter()
                        .zip(&fresh_coupling.price)
                        .map(|(&a, &b)| (1.0 - w) * a + w * b)
                        .collect(),
                    interference: prev
                        .interference
                        .iter()
                        .zip(&fresh_coupling.interference)
                        .map(|(&a, &b)| (1.0 - w) * a + w * b)
                        .collect(),
                }
            }
        };
        coupling_state = Some(coupling.clone());

        // Evaluate the potentials under the frozen coupling.
        let evals: Vec<_> = (0..k)
            .map(|t| evaluate_potential(&potentials[t], &coupling, &fleet.types[t], grid, channel))
            .collect();
        let residual = evals
            .iter()
            .map(|e| e.residual_norm(grid))
            .fold(0.0f64, f64::max);
        residual_history.push(residual);
        trace.push(IterationRecord {
            iteration: iter,
            residual,
            step_product: steps.product,
            xi: steps.xi,
            h_k: steps.h_k,
            c_h: steps.c_h,
            delta_sat,
        });

        if !residual.is_finite() || residual > cfg.divergence_cap {
            diverged = Some(DivergenceInfo {
                iteration: iter,
                step_product: steps.product,
            });
            break;
        }
        if residual < cfg.tolerance {
            converged = true;
            break;
        }

        // Per-type primal and dual moves.
        for t in 0..k {
            let eval = &evals[t];
            // Primal gradient step on the density iterate: the HJB defect
            // field is the negated gradient of the frozen-drift Lagrangian.
            let mut stepped = &iterate_densities[t].values
                + &(&eval.residual_field * (steps.xi * cfg.primal_scale));
            stepped.mapv_inplace(|v| if v.is_finite() { v } else { 0.0 });
            let mut projected = match normalize_density(
                Density {
                    values: stepped.clone(),
                },
                grid,
            ) {
                Ok(p) => p,
                Err(_) => {
                    stepped.mapv_inplace(|v| v.max(1e-12));
                    normalize_density(Density { values: stepped }, grid)?
                }
            };
            // The initial slice is constraint data, not a free variable.
            projected.values.column_mut(0).assign(&initial_columns[t]);

            // Momentum argmin under the frozen drift map.
            let momentum = &projected.values * &eval.drift;

            // Overrelaxed fields; the dual consumes the offloading-flux sign
            // so the Poisson right-hand side is the forward FPK defect.
            let rho_bar = &projected.values * 2.0 - &iterate_densities[t].values;
            let flux_bar = -(&momentum * 2.0 - &momenta[t]);
            let chi = DualPotential {
                values: -&potentials[t],
            };
            let chi_next = dual_update(
                &chi,
                &rho_bar,
                &flux_bar,
                steps.varsigma * cfg.dual_scale,
                fleet.types[t].sigma,
                grid,
                &poisson,
            );
            // Value-consistency relaxation toward the implicit sweep at the
            // frozen coupling, paced by the same dual step.
            let sweep =
                implicit_value_sweep(&coupling, &fleet.types[t], grid, channel, Some(&potentials[t]));
            let relax = steps.varsigma.min(1.0);
            let mut phi = -&chi_next.values;
            phi.zip_mut_with(&sweep, |p, &s| *p += relax * (s - *p));
            let c = fleet.types[t].terminal_c;
            for i in 0..n_q {
                phi[(i, n_s - 1)] = c * grid.coord(i) * grid.coord(i);
            }
            if phi.iter().any(|v| !v.is_finite()) {
                diverged = Some(DivergenceInfo {
                    iteration: iter,
                    step_product: steps.product,
                });
            }
            grad_max_running[t] = grad_max_running[t].max(sup_state_gradient(&phi, grid));
            potentials[t] = phi;
            iterate_densities[t] = projected;
            momenta[t] = momentum;
        }
        if diverged.is_some() {
            break;
        }

        // Refresh the policy-consistent density path for the next coupling.
        for t in 0..k {
            let eval =
                evaluate_potential(&potentials[t], &coupling, &fleet.types[t], grid, channel);
            path_densities[t] = fpk_rollout(
                &fleet.initial_densities[t],
                &eval.drift,
                fleet.types[t].sigma,
                grid,
            )?;
            policies[t] = eval.policy;
            rates[t] = eval.rate;
        }
    }

    // Feasibility restoration: report the FPK rollout of the final
    // policies (exact in the uncontrolled limit).
    if diverged.is_none() {
        let coupling = coupling_from_fields(
            &path_densities,
            &policies,
            &rates,
            fleet,
            channel,
            snapshots,
            cfg,
            grid,
            0.0,
            price_override,
        )?;
        for t in 0..k {
            let eval =
                evaluate_potential(&potentials[t], &coupling, &fleet.types[t], grid, channel);
            path_densities[t] = fpk_rollout(
                &fleet.initial_densities[t],
                &eval.drift,
                fleet.types[t].sigma,
                grid,
            )?;
            policies[t] = eval.policy;
            rates[t] = eval.rate;
        }
    }

    let final_coupling = coupling_from_fields(
        &path_densities,
        &policies,
        &rates,
        fleet,
        channel,
        snapshots,
        cfg,
        grid,
        0.0,
        price_override,
    )?;
    Ok(EquilibriumSolution {
        densities: path_densities,
        potentials: potentials
            .into_iter()
            .map(|values| DualPotential { values })
            .collect(),
        policies,
        rate_fields: rates,
        residual_history,
        trace,
        iterations_used,
        converged,
        diverged,
        coupling: final_coupling,
    })
}

/// Largest attainable drift magnitude max(R_max, D_max) in data units per
/// second; the Poisson metric weight and the rollout CFL bound.
pub fn drift_scale(fleet: &FleetConfig, channel: &ChannelParams) -> f64 {
    let g_eff = channel.solver_gain() / channel.noise;
    let r_max = super::physics::rate_data_units(channel.p_max, g_eff, channel);
    r_max.max(fleet.data_rate_max())
}

fn sup_state_gradient(phi: &Array2<f64>, grid: &Grid) -> f64 {
    let mut buf = vec![0.0; grid.n_q];
    let mut best = 0.0f64;
    for j in 0..grid.n_slices() {
        d_dq_centered(phi.column(j), grid.dq, &mut buf);
        for v in &buf {
            best = best.max(v.abs());
        }
    }
    best
}
