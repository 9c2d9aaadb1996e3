//! Empirical Nash-gap probe: compares realized costs of vehicles following
//! the equilibrium policy (under the empirical finite-fleet price) against
//! the best deviation found by dynamic programming on the grid with the
//! mean field held fixed.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{largest_remainder_counts, ChannelParams, FleetConfig, Grid};
use crate::leo::SnapshotTrace;
use crate::transport::Marginal;

use super::physics::{d2_dq2, rate_data_units};
use super::{EquilibriumSolution, SolverConfig};

/// Number of power levels in the deviation DP.
const DP_POWER_LEVELS: usize = 64;

/// Mean positive gap between realized equilibrium-policy costs and the DP
/// best-deviation value, over `n_probe` probe vehicles.
#[allow(clippy::too_many_arguments)]
pub fn empirical_nash_gap(
    solution: &EquilibriumSolution,
    fleet: &FleetConfig,
    n_probe: usize,
    snapshots: &SnapshotTrace,
    rng_seed: u64,
    cfg: &SolverConfig,
    grid: &Grid,
    channel: &ChannelParams,
) -> Result<f64> {
    if n_probe == 0 {
        return Err(Error::Precondition("n_probe must be >= 1".into()));
    }
    let n_sim = fleet.n_vehicles.max(n_probe);
    let counts = largest_remainder_counts(&fleet.proportions, n_sim);
    let vehicle_type: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat(t).take(c))
        .collect();

    // Initial states sampled from the per-type initial densities.
    let marginals: Vec<Marginal> = (0..fleet.k_types)
        .map(|t| Marginal::from_density(&solution.densities[t], 0, grid))
        .collect::<Result<_>>()?;
    let mut q: Vec<f64> = (0..n_sim)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ (i as u64).wrapping_mul(0x9E3779B97F4A7C15));
            marginals[vehicle_type[i]].quantile(rng.gen_range(f64::EPSILON..1.0))
        })
        .collect();
    let q0 = q.clone();

    // Forward simulation under the equilibrium policy with the empirical
    // congestion price of the simulated fleet.
    let g_eff_at = |j: usize| channel.solver_gain() / (channel.noise + solution.coupling.interference[j]);
    let mut noise_rngs: Vec<ChaCha8Rng> = (0..n_sim)
        .map(|i| ChaCha8Rng::seed_from_u64(rng_seed ^ 0xD1B5_4A32_D192_ED03 ^ (i as u64).wrapping_mul(0xBF58476D1CE4E5B9)))
        .collect();
    let mut realized = vec![0.0f64; n_sim];
    for j in 0..grid.n_t {
        let g_eff = g_eff_at(j);
        // Per-vehicle powers and rates from the interpolated policy field.
        let mut powers = vec![0.0f64; n_sim];
        let mut rates = vec![0.0f64; n_sim];
        let mut mean_rate = 0.0f64;
        for i in 0..n_sim {
            let p = interp_column(&solution.policies[vehicle_type[i]], q[i], j, grid);
            let r = rate_data_units(p, g_eff, channel);
            powers[i] = p;
            rates[i] = r;
            mean_rate += r;
        }
        mean_rate /= n_sim as f64;
        let snap = snapshots.at_time(grid.time(j));
        let bottleneck = crate::leo::bottleneck_bandwidth(snap)?;
        let empirical_price = cfg.kappa + cfg.varrho * mean_rate + cfg.mu / bottleneck;
        for i in 0..n_sim {
            let params = &fleet.types[vehicle_type[i]];
            realized[i] += (params.beta1 * powers[i] * powers[i]
                + params.beta2 * empirical_price * rates[i])
                * grid.dt;
            let d = params.data_rate.at(grid.time(j), grid.horizon_t);
            let noise: f64 = standard_normal(&mut noise_rngs[i]);
            let dq = (d - rates[i]) * grid.dt + params.sigma * grid.dt.sqrt() * noise;
            q[i] = (q[i] + dq).clamp(0.0, grid.q_max);
        }
    }
    for i in 0..n_sim {
        let params = &fleet.types[vehicle_type[i]];
        realized[i] += params.terminal_c * q[i] * q[i];
    }

    // Best-deviation value per type by backward DP against the mean field.
    let dp_values: Vec<Array2<f64>> = (0..fleet.k_types)
        .map(|t| deviation_dp(solution, &fleet.types[t], cfg, grid, channel))
        .collect();

    let mut gap_acc = 0.0;
    for i in 0..n_probe.min(n_sim) {
        let v = interp_column(&dp_values[vehicle_type[i]], q0[i], 0, grid);
        gap_acc += (realized[i] - v).max(0.0);
    }
    Ok(gap_acc / n_probe.min(n_sim) as f64)
}

/// Backward dynamic program over a discrete power grid, holding the mean
/// field (price and interference traces) fixed.
fn deviation_dp(
    solution: &EquilibriumSolution,
    params: &crate::grid::TypeParams,
    cfg: &SolverConfig,
    grid: &Grid,
    channel: &ChannelParams,
) -> Array2<f64> {
    let _ = cfg;
    let n_q = grid.n_q;
    let n_s = grid.n_slices();
    let mut value = Array2::zeros((n_q, n_s));
    for i in 0..n_q {
        value[(i, n_s - 1)] = params.terminal_c * grid.coord(i) * grid.coord(i);
    }
    let mut smoothed = vec![0.0; n_q];
    let mut d2 = vec![0.0; n_q];
    for j in (0..n_s - 1).rev() {
        // E[V(q + sigma sqrt(dt) xi)] ~ V + dt sigma^2/2 V''.
        let next = value.column(j + 1).to_owned();
        d2_dq2(next.view(), grid.dq, &mut d2);
        for i in 0..n_q {
            smoothed[i] = next[i] + grid.dt * 0.5 * params.sigma * params.sigma * d2[i];
        }
        let price = solution.coupling.price[j];
        let g_eff = channel.solver_gain() / (channel.noise + solution.coupling.interference[j]);
        let d_rate = params.data_rate.at(grid.time(j), grid.horizon_t);
        for i in 0..n_q {
            let qi = grid.coord(i);
            let mut best = f64::INFINITY;
            for l in 0..=DP_POWER_LEVELS {
                let p = channel.p_max * l as f64 / DP_POWER_LEVELS as f64;
                let r = rate_data_units(p, g_eff, channel);
                let run = (params.beta1 * p * p + params.beta2 * price * r) * grid.dt;
                let q_next = (qi + (d_rate - r) * grid.dt).clamp(0.0, grid.q_max);
                let cont = interp_values(&smoothed, q_next, grid);
                best = best.min(run + cont);
            }
            value[(i, j)] = best;
        }
    }
    value
}

fn interp_values(values: &[f64], q: f64, grid: &Grid) -> f64 {
    let x = (q / grid.dq).clamp(0.0, (grid.n_q - 1) as f64);
    let i0 = x.floor() as usize;
    let i1 = (i0 + 1).min(grid.n_q - 1);
    let w = x - i0 as f64;
    values[i0] * (1.0 - w) + values[i1] * w
}

/// Linear interpolation of a field column in the state coordinate.
pub fn interp_column(field: &Array2<f64>, q: f64, j: usize, grid: &Grid) -> f64 {
    let x = (q / grid.dq).clamp(0.0, (grid.n_q - 1) as f64);
    let i0 = x.floor() as usize;
    let i1 = (i0 + 1).min(grid.n_q - 1);
    let w = x - i0 as f64;
    field[(i0, j)] * (1.0 - w) + field[(i1, j)] * w
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
