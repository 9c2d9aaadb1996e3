//! Damped Picard fixed-point solver, the independent cross-check for the
//! primal-dual route: backward value sweep with implicit diffusion, policy
//! extraction, forward FPK rollout, density damping.

use ndarray::Array2;

use crate::error::Result;
use crate::grid::{normalize_density, ChannelParams, Density, DualPotential, FleetConfig, Grid};
use crate::leo::SnapshotTrace;
use crate::transport::{w2_1d, Marginal};

use super::operators::{evaluate_potential, fpk_rollout, CouplingTrace};
use super::physics::{d_dq_centered, optimal_power_with_gain, rate_data_units, running_cost};
use super::{coupling_from_fields, EquilibriumSolution, IterationRecord, SolverConfig};

/// Default density damping factor.
pub const PICARD_DAMPING: f64 = 0.3;
/// Successive-density W2 change threshold.
pub const PICARD_TOL: f64 = 1e-5;
/// Outer iteration cap.
pub const PICARD_MAX_OUTER: usize = 200;
/// Oscillation window: non-decreasing change over this many iterations is
/// reported as non-convergence.
const OSCILLATION_WINDOW: usize = 50;

/// Damped fixed-point solve with the default damping 0.3.
pub fn picard_solve(
    fleet: &FleetConfig,
    cfg: &SolverConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
) -> Result<EquilibriumSolution> {
    picard_solve_damped(fleet, cfg, snapshots, grid, channel, PICARD_DAMPING)
}

/// Damped fixed-point solve with an explicit damping factor in (0, 1].
pub fn picard_solve_damped(
    fleet: &FleetConfig,
    cfg: &SolverConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
    damping: f64,
) -> Result<EquilibriumSolution> {
    channel.validate()?;
    let k = fleet.k_types;
    let n_q = grid.n_q;
    let n_s = grid.n_slices();

    let mut densities: Vec<Density> = fleet
        .initial_densities
        .iter()
        .map(|p| Density::from_initial_profile(grid, p))
        .collect::<Result<_>>()?;
    let mut potentials: Vec<Array2<f64>> = vec![Array2::zeros((n_q, n_s)); k];
    let mut policies: Vec<Array2<f64>> = vec![Array2::zeros((n_q, n_s)); k];
    let mut rates: Vec<Array2<f64>> = vec![Array2::zeros((n_q, n_s)); k];

    let mut history: Vec<f64> = Vec::new();
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut converged = false;
    let mut best_change = f64::INFINITY;
    let mut stall = 0usize;
    let mut iterations_used = 0;
    let mut coupling_state: Option<CouplingTrace> = None;

    for outer in 1..=PICARD_MAX_OUTER {
        iterations_used = outer;
        let fresh = coupling_from_fields(
            &densities, &policies, &rates, fleet, channel, snapshots, cfg, grid, 0.0, None,
        )?;
        // The coupling memory is damped like the densities, so the lagged
        // price/interference feedback cannot sustain a limit cycle.
        let coupling = match coupling_state.take() {
            None => fresh,
            Some(prev) => CouplingTrace {
                price: prev
                    .price
                    .iter()
                    .zip(&fresh.price)
                    .map(|(&a, &b)| (1.0 - damping) * a + damping * b)
                    .collect(),
                interference: prev
                    .interference
                    .iter()
                    .zip(&fresh.interference)
                    .map(|(&a, &b)| (1.0 - damping) * a + damping * b)
                    .collect(),
            },
        };
        coupling_state = Some(coupling.clone());

        let mut change = 0.0f64;
        for t in 0..k {
            let phi = value_sweep(&coupling, &fleet.types[t], grid, channel);
            let eval = evaluate_potential(&phi, &coupling, &fleet.types[t], grid, channel);
            let rolled = fpk_rollout(
                &fleet.initial_densities[t],
                &eval.drift,
                fleet.types[t].sigma,
                grid,
            )?;
            let blended = normalize_density(
                Density {
                    values: &densities[t].values * (1.0 - damping) + &rolled.values * damping,
                },
                grid,
            )?;
            change = change.max(density_change(&densities[t], &blended, grid)?);
            densities[t] = blended;
            potentials[t] = phi;
            policies[t] = eval.policy;
            rates[t] = eval.rate;
        }
        history.push(change);
        trace.push(IterationRecord {
            iteration: outer,
            residual: change,
            step_product: damping,
            xi: damping,
            h_k: 0.0,
            c_h: 0.0,
            delta_sat: 0.0,
        });

        if change < PICARD_TOL {
            converged = true;
            break;
        }
        if change < best_change {
            best_change = change;
            stall = 0;
        } else {
            stall += 1;
            if stall >= OSCILLATION_WINDOW {
                break; // non-convergence reported through the flag
            }
        }
    }

    // Report the rollout consistent with the final policies.
    let coupling = coupling_from_fields(
        &densities, &policies, &rates, fleet, channel, snapshots, cfg, grid, 0.0, None,
    )?;
    let mut final_densities = Vec::with_capacity(k);
    for t in 0..k {
        let eval = evaluate_potential(&potentials[t], &coupling, &fleet.types[t], grid, channel);
        final_densities.push(fpk_rollout(
            &fleet.initial_densities[t],
            &eval.drift,
            fleet.types[t].sigma,
            grid,
        )?);
    }

    Ok(EquilibriumSolution {
        densities: final_densities,
        potentials: potentials
            .into_iter()
            .map(|values| DualPotential { values })
            .collect(),
        policies,
        rate_fields: rates,
        residual_history: history,
        trace,
        iterations_used,
        converged,
        diverged: None,
        coupling,
    })
}

/// Backward value sweep: implicit in diffusion (tridiagonal solve per time
/// step), explicit Hamiltonian evaluated at the next slice's gradient.
pub(crate) fn value_sweep(
    coupling: &CouplingTrace,
    params: &crate::grid::TypeParams,
    grid: &Grid,
    channel: &ChannelParams,
) -> Array2<f64> {
    let n_q = grid.n_q;
    let n_s = grid.n_slices();
    let mut phi = Array2::zeros((n_q, n_s));
    for i in 0..n_q {
        phi[(i, n_s - 1)] = params.terminal_c * grid.coord(i) * grid.coord(i);
    }
    let a = grid.dt * 0.5 * params.sigma * params.sigma;
    let mut dphi = vec![0.0; n_q];
    let mut rhs = vec![0.0; n_q];
    for j in (0..n_s - 1).rev() {
        d_dq_centered(phi.column(j + 1), grid.dq, &mut dphi);
        let price = coupling.price[j];
        let g_eff = channel.solver_gain() / (channel.noise + coupling.interference[j]);
        let d_rate = params.data_rate.at(grid.time(j), grid.horizon_t);
        for i in 0..n_q {
            let p_star = optimal_power_with_gain(dphi[i], price, params, channel, g_eff, channel.p_max);
            let rate = rate_data_units(p_star, g_eff, channel);
            let hamiltonian = -running_cost(p_star, rate, price, params) - (d_rate - rate) * dphi[i];
            rhs[i] = phi[(i, j + 1)] - grid.dt * hamiltonian;
        }
        let col = solve_implicit_diffusion(&rhs, a, grid.dq);
        for i in 0..n_q {
            phi[(i, j)] = col[i];
        }
    }
    phi
}

/// Solves (I - a*D2) x = b with the mirrored Neumann D2, by the Thomas
/// algorithm.
fn solve_implicit_diffusion(b: &[f64], a: f64, dq: f64) -> Vec<f64> {
    let n = b.len();
    let r = a / (dq * dq);
    let mut diag = vec![1.0 + 2.0 * r; n];
    let mut upper = vec![-r; n - 1];
    let mut lower = vec![-r; n - 1];
    upper[0] = -2.0 * r;
    lower[n - 2] = -2.0 * r;

    let mut x = b.to_vec();
    // Forward elimination.
    for i in 1..n {
        let w = lower[i - 1] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        x[i] -= w * x[i - 1];
    }
    // Back substitution.
    x[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (x[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Time-averaged W2 distance between two density fields.
pub fn density_change(a: &Density, b: &Density, grid: &Grid) -> Result<f64> {
    let mut acc = 0.0;
    for j in 0..grid.n_slices() {
        let ma = Marginal::from_density(a, j, grid)?;
        let mb = Marginal::from_density(b, j, grid)?;
        acc += w2_1d(&ma, &mb, grid.n_q);
    }
    Ok(acc / grid.n_slices() as f64)
}
