//! Monte Carlo fleet simulation: N vehicles integrate the queue SDE under
//! per-type equilibrium policies, and communication KPIs are extracted from
//! the trajectories.
//!
//! Common random numbers: every per-vehicle random stream (gain draw, queue
//! noise, initial state) is keyed by (trial seed, vehicle index) only, never
//! by the method, so paired cross-method comparisons isolate policy effects.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{largest_remainder_counts, ChannelParams, FleetConfig, Grid};
use crate::leo::SnapshotTrace;
use crate::solver::nash::{interp_column, standard_normal};
use crate::solver::operators::CouplingTrace;

/// Trial-level configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialConfig {
    pub n_vehicles: usize,
    /// Independent trials; 25 for KPI means, 80 for delay CDFs.
    pub trials: usize,
    pub rng_seed: u64,
    /// Optional channel-quality override: vehicle SNR is drawn at this mean
    /// level (dB over noise) instead of the distance model.
    pub snr_db: Option<f64>,
    /// Latency threshold for the QoS satisfaction KPI.
    pub qos_threshold_ms: f64,
    /// Floor of the delay quotient denominator (data units per second).
    pub rate_floor: f64,
    /// Cap of the per-step delay sample in seconds.
    pub delay_cap_s: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 500,
            trials: 25,
            rng_seed: 1,
            snr_db: None,
            qos_threshold_ms: 100.0,
            rate_floor: 1.0e3 * 1.0e-6, // 1 kbit/s in data units
            delay_cap_s: 10.0,
        }
    }
}

/// Per-vehicle trajectory accounting of one trial.
#[derive(Debug, Clone)]
pub struct VehicleStats {
    pub type_index: usize,
    pub mean_delay_s: f64,
    pub mean_rate_units: f64,
    pub energy_j: f64,
    pub generated_units: f64,
    pub transmitted_units: f64,
    pub dropped_units: f64,
    pub residual_units: f64,
    /// Sum of p/R over steps with positive rate (J per data unit).
    pub p_over_r_sum: f64,
    pub steps_with_rate: usize,
    /// Sum of price * rate over steps.
    pub price_rate_sum: f64,
    pub max_q: f64,
    pub min_q: f64,
}

/// One trial's trajectories plus the price trace the vehicles faced.
#[derive(Debug, Clone)]
pub struct TrialResult {
    pub vehicles: Vec<VehicleStats>,
    pub steps: usize,
}

/// Communication KPI summary of one or more trials.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KpiReport {
    pub mean_delay_ms: f64,
    pub throughput_mbps: f64,
    pub energy_per_bit_nj: f64,
    pub packet_loss_pct: f64,
    pub spectral_efficiency_bpshz: f64,
    pub mec_cost: f64,
    pub qos_satisfaction_pct: f64,
    /// Per-vehicle episode-mean delays (ms) for CDF dumps.
    pub vehicle_delays_ms: Vec<f64>,
    /// Set when no data was generated and the loss ratio is reported as 0.
    pub zero_generation_flag: bool,
}

/// Per-reference-type policy fields plus the coupling trace they were
/// solved under.
#[derive(Debug, Clone)]
pub struct MethodPolicies {
    pub policy_per_type: Vec<Array2<f64>>,
    pub coupling: CouplingTrace,
}

impl MethodPolicies {
    /// Maps a solution over merged groups back to the reference types.
    pub fn from_groups(
        policies: &[Array2<f64>],
        coupling: &CouplingTrace,
        groups: &[Vec<usize>],
        k_ref: usize,
    ) -> Result<Self> {
        let mut policy_per_type: Vec<Option<Array2<f64>>> = vec![None; k_ref];
        for (g, members) in groups.iter().enumerate() {
            for &t in members {
                if t >= k_ref {
                    return Err(Error::Precondition("group member outside reference fleet".into()));
                }
                policy_per_type[t] = Some(policies[g].clone());
            }
        }
        let policy_per_type: Vec<Array2<f64>> = policy_per_type
            .into_iter()
            .map(|p| p.ok_or_else(|| Error::Precondition("unmapped reference type".into())))
            .collect::<Result<_>>()?;
        Ok(Self {
            policy_per_type,
            coupling: coupling.clone(),
        })
    }
}

/// Euler-Maruyama integration of the queue dynamics for every vehicle in
/// one trial; deterministic in (trial seed, vehicle index).
#[allow(clippy::too_many_arguments)]
pub fn simulate_trial(
    method: &MethodPolicies,
    fleet: &FleetConfig,
    trial_cfg: &TrialConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
    trial_seed: u64,
) -> Result<TrialResult> {
    let n = trial_cfg.n_vehicles;
    if method.policy_per_type.len() != fleet.k_types {
        return Err(Error::Precondition("policy map must cover every fleet type".into()));
    }
    let counts = largest_remainder_counts(&fleet.proportions, n);
    let vehicle_type: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat(t).take(c))
        .collect();

    // Initial-state samplers per type.
    let initial_cdfs: Vec<crate::transport::Marginal> = fleet
        .initial_densities
        .iter()
        .map(|p| {
            let d = crate::grid::Density::from_initial_profile(grid, p)?;
            crate::transport::Marginal::from_density(&d, 0, grid)
        })
        .collect::<Result<_>>()?;

    let _ = snapshots; // price trace already folded into the coupling

    let vehicles: Vec<VehicleStats> = (0..n)
        .map(|i| {
            let t = vehicle_type[i];
            let params = &fleet.types[t];
            let mix = |tag: u64| {
                trial_seed
                    ^ tag
                    ^ (i as u64).wrapping_mul(0x9E3779B97F4A7C15)
            };
            let mut gain_rng = ChaCha8Rng::seed_from_u64(mix(0xA5A5_0000_0000_0001));
            let gain = match trial_cfg.snr_db {
                Some(snr) => {
                    // Mean SNR pinned at p_max; shadowing still applies.
                    let base = 10f64.powf(snr / 10.0) * channel.noise / channel.p_max;
                    let shadow_db = trial_cfg_shadow(&mut gain_rng, channel);
                    base * 10f64.powf(shadow_db / 10.0)
                }
                None => {
                    let d = gain_rng.gen_range(channel.d0_m..channel.max_distance_m);
                    let shadow_db = trial_cfg_shadow(&mut gain_rng, channel);
                    channel.gain_at(d) * 10f64.powf(shadow_db / 10.0)
                }
            };
            let mut init_rng = ChaCha8Rng::seed_from_u64(mix(0xA5A5_0000_0000_0002));
            let mut q = initial_cdfs[t].quantile(init_rng.gen_range(f64::EPSILON..1.0));
            let mut noise_rng = ChaCha8Rng::seed_from_u64(mix(0xA5A5_0000_0000_0003));

            let mut delay_sum = 0.0;
            let mut rate_sum = 0.0;
            let mut energy = 0.0;
            let mut generated = 0.0;
            let mut transmitted = 0.0;
            let mut dropped = 0.0;
            let mut p_over_r = 0.0;
            let mut steps_with_rate = 0usize;
            let mut price_rate = 0.0;
            let mut max_q: f64 = q;
            let mut min_q: f64 = q;
            let q0 = q;

            for j in 0..grid.n_t {
                let p = interp_column(&method.policy_per_type[t], q, j, grid)
                    .clamp(0.0, channel.p_max);
                let g_eff = gain / (channel.noise + method.coupling.interference[j]);
                let rate = crate::solver::physics::rate_data_units(p, g_eff, channel);

                delay_sum += (q / rate.max(trial_cfg.rate_floor)).min(trial_cfg.delay_cap_s);
                rate_sum += rate;
                energy += p * grid.dt;
                if rate > 0.0 {
                    p_over_r += p / rate;
                    steps_with_rate += 1;
                }
                price_rate += method.coupling.price[j] * rate;

                let d = params.data_rate.at(grid.time(j), grid.horizon_t);
                let noise = standard_normal(&mut noise_rng);
                // Stochastic net arrivals, floored so the queue never goes
                // negative; service is capped by queue content; overflow
                // above capacity is dropped. This keeps the per-vehicle
                // data ledger exact.
                let inflow = (d * grid.dt + params.sigma * grid.dt.sqrt() * noise).max(-q);
                let after_in = q + inflow;
                let served = (rate * grid.dt).min(after_in);
                let after_out = after_in - served;
                let drop = (after_out - grid.q_max).max(0.0);
                q = after_out - drop;
                generated += inflow;
                transmitted += served;
                dropped += drop;
                max_q = max_q.max(q);
                min_q = min_q.min(q);
            }

            VehicleStats {
                type_index: t,
                mean_delay_s: delay_sum / grid.n_t as f64,
                mean_rate_units: rate_sum / grid.n_t as f64,
                energy_j: energy,
                generated_units: generated,
                transmitted_units: transmitted,
                dropped_units: dropped,
                residual_units: q - q0,
                p_over_r_sum: p_over_r,
                steps_with_rate,
                price_rate_sum: price_rate,
                max_q,
                min_q,
            }
        })
        .collect();

    Ok(TrialResult {
        vehicles,
        steps: grid.n_t,
    })
}

fn trial_cfg_shadow(rng: &mut ChaCha8Rng, channel: &ChannelParams) -> f64 {
    standard_normal(rng) * channel.shadowing_db
}

/// Extracts the KPI summary from trial trajectories.
pub fn compute_kpis(
    trials: &[TrialResult],
    channel: &ChannelParams,
    trial_cfg: &TrialConfig,
) -> Result<KpiReport> {
    if trials.is_empty() || trials.iter().any(|t| t.vehicles.is_empty()) {
        return Err(Error::Precondition("no trajectories to summarize".into()));
    }
    let mut delay_acc = 0.0;
    let mut rate_acc = 0.0;
    let mut p_over_r_acc = 0.0;
    let mut steps_with_rate = 0usize;
    let mut generated = 0.0;
    let mut dropped = 0.0;
    let mut price_rate_acc = 0.0;
    let mut price_rate_steps = 0usize;
    let mut n_vehicles = 0usize;
    let mut qos_hits = 0usize;
    let mut vehicle_delays_ms = Vec::new();
    for trial in trials {
        for v in &trial.vehicles {
            let delay_ms = v.mean_delay_s * 1e3;
            vehicle_delays_ms.push(delay_ms);
            delay_acc += delay_ms;
            rate_acc += v.mean_rate_units;
            p_over_r_acc += v.p_over_r_sum;
            steps_with_rate += v.steps_with_rate;
            generated += v.generated_units;
            dropped += v.dropped_units;
            price_rate_acc += v.price_rate_sum;
            price_rate_steps += trial.steps;
            if delay_ms < trial_cfg.qos_threshold_ms {
                qos_hits += 1;
            }
            n_vehicles += 1;
        }
    }
    let nv = n_vehicles as f64;
    let mean_rate_units = rate_acc / nv;
    let throughput_bps = mean_rate_units / channel.data_units_per_bit;
    let zero_generation_flag = generated <= 0.0;
    let packet_loss_pct = if zero_generation_flag {
        0.0
    } else {
        100.0 * dropped / generated
    };
    // p/R is J per data unit; convert to J/bit then nJ/bit.
    let energy_per_bit_nj = if steps_with_rate > 0 {
        (p_over_r_acc / steps_with_rate as f64) * channel.data_units_per_bit * 1e9
    } else {
        0.0
    };
    let mec_cost = (price_rate_acc / price_rate_steps.max(1) as f64)
        / (channel.bandwidth_b * channel.data_units_per_bit);
    Ok(KpiReport {
        mean_delay_ms: delay_acc / nv,
        throughput_mbps: throughput_bps / 1e6,
        energy_per_bit_nj,
        packet_loss_pct,
        spectral_efficiency_bpshz: throughput_bps / channel.bandwidth_b,
        mec_cost,
        qos_satisfaction_pct: 100.0 * qos_hits as f64 / nv,
        vehicle_delays_ms,
        zero_generation_flag,
    })
}

/// Verifies the per-vehicle data ledger generated = transmitted + residual
/// + dropped; returns the largest relative violation.
pub fn conservation_audit(result: &TrialResult) -> f64 {
    result
        .vehicles
        .iter()
        .map(|v| {
            let lhs = v.generated_units;
            let rhs = v.transmitted_units + v.residual_units + v.dropped_units;
            (lhs - rhs).abs() / lhs.abs().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Runs `trials` paired trials and returns (per-trial reports, pooled report).
#[allow(clippy::too_many_arguments)]
pub fn run_trials(
    method: &MethodPolicies,
    fleet: &FleetConfig,
    trial_cfg: &TrialConfig,
    snapshots: &SnapshotTrace,
    grid: &Grid,
    channel: &ChannelParams,
) -> Result<(Vec<KpiReport>, KpiReport)> {
    let results: Vec<TrialResult> = (0..trial_cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_cfg
                .rng_seed
                .wrapping_add((trial as u64).wrapping_mul(0x2545F4914F6CDD1D));
            simulate_trial(method, fleet, trial_cfg, snapshots, grid, channel, seed)
        })
        .collect::<Result<_>>()?;
    let per_trial: Vec<KpiReport> = results
        .iter()
        .map(|r| compute_kpis(std::slice::from_ref(r), channel, trial_cfg))
        .collect::<Result<_>>()?;
    let pooled = compute_kpis(&results, channel, trial_cfg)?;
    Ok((per_trial, pooled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::leo::{generate_snapshots, LeoConfig};
    use approx::assert_relative_eq;

    fn setup(n_q: usize, n_t: usize) -> (Grid, FleetConfig, ChannelParams, SnapshotTrace) {
        let grid = make_grid(n_q, n_t, 10.0, 0.06).unwrap();
        let fleet = FleetConfig::balanced(60, 3, &grid).unwrap();
        let channel = ChannelParams::default();
        let snaps = generate_snapshots(&LeoConfig::static_topology(), 0.06, 9).unwrap();
        (grid, fleet, channel, snaps)
    }

    fn zero_method(grid: &Grid, k: usize) -> MethodPolicies {
        MethodPolicies {
            policy_per_type: vec![Array2::zeros((grid.n_q, grid.n_slices())); k],
            coupling: CouplingTrace::uncoupled(grid, 0.1),
        }
    }

    #[test]
    fn deterministic_queue_growth_without_noise_or_service() {
        let (grid, mut fleet, channel, snaps) = setup(30, 20);
        for t in fleet.types.iter_mut() {
            t.sigma = 1e-12; // sigma must stay positive; noise is negligible
        }
        let method = zero_method(&grid, 3);
        let cfg = TrialConfig {
            n_vehicles: 9,
            trials: 1,
            ..Default::default()
        };
        let r = simulate_trial(&method, &fleet, &cfg, &snaps, &grid, &channel, 5).unwrap();
        for v in &r.vehicles {
            let d = fleet.types[v.type_index]
                .data_rate
                .at(0.0, grid.horizon_t);
            // q grows by exactly D * T unless capacity clipped.
            let expected = d * grid.horizon_t;
            if v.dropped_units == 0.0 {
                assert_relative_eq!(v.residual_units, expected, max_relative = 1e-6);
            }
            assert_eq!(v.transmitted_units, 0.0);
        }
    }

    #[test]
    fn constant_fields_delay_is_q_over_r() {
        // One vehicle, q pinned by zero noise/zero data, constant policy.
        let (grid, mut fleet, channel, snaps) = setup(30, 20);
        fleet.types[0].sigma = 1e-12;
        for t in fleet.types.iter_mut() {
            t.data_rate = crate::grid::DataRateProfile::Constant { rate: 0.0 };
        }
        // The service drains the queue, so delay shrinks over time; with a
        // tiny policy the drain is negligible and q stays ~q0.
        let mut method = zero_method(&grid, 3);
        for p in method.policy_per_type.iter_mut() {
            p.fill(1e-9);
        }
        let cfg = TrialConfig {
            n_vehicles: 3,
            trials: 1,
            ..Default::default()
        };
        let r = simulate_trial(&method, &fleet, &cfg, &snaps, &grid, &channel, 11).unwrap();
        for v in &r.vehicles {
            assert!(v.mean_delay_s > 0.0);
        }
        let audit = conservation_audit(&r);
        assert!(audit <= 1e-9, "audit {audit}");
    }

    #[test]
    fn brownian_variance_matches_theory() {
        let (grid, mut fleet, channel, snaps) = setup(30, 60);
        let sigma = 1.2;
        for t in fleet.types.iter_mut() {
            t.sigma = sigma;
            t.data_rate = crate::grid::DataRateProfile::Constant { rate: 0.0 };
        }
        // Start everyone in the middle so boundaries stay inactive.
        for p in fleet.initial_densities.iter_mut() {
            *p = crate::grid::gaussian_profile(&grid, 5.0, 1e-2);
        }
        let method = zero_method(&grid, 3);
        let cfg = TrialConfig {
            n_vehicles: 10_000,
            trials: 1,
            ..Default::default()
        };
        let r = simulate_trial(&method, &fleet, &cfg, &snaps, &grid, &channel, 21).unwrap();
        let finals: Vec<f64> = r.vehicles.iter().map(|v| v.residual_units).collect();
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / finals.len() as f64;
        let expected = sigma * sigma * grid.horizon_t;
        let se = expected * (2.0 / finals.len() as f64).sqrt();
        assert!(
            (var - expected).abs() < 3.0 * se + 1e-6,
            "var {var}, expected {expected}"
        );
    }

    #[test]
    fn trajectories_stay_inside_domain_and_ledger_balances() {
        let (grid, fleet, channel, snaps) = setup(40, 40);
        let mut method = zero_method(&grid, 3);
        for p in method.policy_per_type.iter_mut() {
            p.fill(channel.p_max);
        }
        let cfg = TrialConfig {
            n_vehicles: 200,
            trials: 1,
            ..Default::default()
        };
        let r = simulate_trial(&method, &fleet, &cfg, &snaps, &grid, &channel, 33).unwrap();
        for v in &r.vehicles {
            assert!(v.max_q <= grid.q_max + 1e-12);
            assert!(v.min_q >= -1e-12);
        }
        assert!(conservation_audit(&r) <= 1e-6);
    }

    #[test]
    fn paired_trials_are_bit_identical() {
        let (grid, fleet, channel, snaps) = setup(30, 20);
        let mut m1 = zero_method(&grid, 3);
        for p in m1.policy_per_type.iter_mut() {
            p.fill(0.05);
        }
        let m2 = m1.clone();
        let cfg = TrialConfig {
            n_vehicles: 50,
            trials: 3,
            ..Default::default()
        };
        let (a, pa) = run_trials(&m1, &fleet, &cfg, &snaps, &grid, &channel).unwrap();
        let (b, pb) = run_trials(&m2, &fleet, &cfg, &snaps, &grid, &channel).unwrap();
        assert_eq!(pa, pb);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }

    #[test]
    fn kpi_identities_and_degenerate_channel() {
        let (grid, fleet, channel, snaps) = setup(30, 20);
        let method = zero_method(&grid, 3);
        let cfg = TrialConfig {
            n_vehicles: 40,
            trials: 2,
            ..Default::default()
        };
        let (_, pooled) = run_trials(&method, &fleet, &cfg, &snaps, &grid, &channel).unwrap();
        // Zero policy: no throughput, delay saturated at the cap.
        assert_eq!(pooled.throughput_mbps, 0.0);
        assert_eq!(pooled.spectral_efficiency_bpshz, 0.0);
        assert_relative_eq!(
            pooled.mean_delay_ms,
            cfg.delay_cap_s * 1e3,
            max_relative = 1e-12
        );
        // SE * B = throughput identity.
        assert_relative_eq!(
            pooled.spectral_efficiency_bpshz * channel.bandwidth_b,
            pooled.throughput_mbps * 1e6,
            epsilon = 1e-9
        );
    }
}

// ---------------------------------------------------------------------------
// Cross-method comparison
// ---------------------------------------------------------------------------

/// A solver variant entering a comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    /// Adaptive granularity K*(N) with adaptive steps.
    Proposed,
    Baseline(crate::solver::baselines::BaselineKind),
}

impl MethodKind {
    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::Proposed => "proposed",
            MethodKind::Baseline(b) => b.label(),
        }
    }

    /// The five compared methods in presentation order.
    pub fn all() -> Vec<MethodKind> {
        use crate::solver::baselines::BaselineKind::*;
        vec![
            MethodKind::Proposed,
            MethodKind::Baseline(GproxK1),
            MethodKind::Baseline(SmfgK1),
            MethodKind::Baseline(FixedK2),
            MethodKind::Baseline(FixedK3),
        ]
    }
}

/// KPI outcome of one (method, N) cell.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: MethodKind,
    pub n: usize,
    /// None when the solver diverged for this cell.
    pub per_trial: Option<Vec<KpiReport>>,
    pub pooled: Option<KpiReport>,
}

/// Runs every method over every fleet size with common random numbers and
/// aggregates per-trial KPI reports. A diverging solver marks its cell
/// failed; the remaining cells proceed.
#[allow(clippy::too_many_arguments)]
pub fn run_comparison(
    methods: &[MethodKind],
    n_grid: &[usize],
    trial_cfg: &TrialConfig,
    grid: &Grid,
    channel: &ChannelParams,
    snapshots: &SnapshotTrace,
    solver_cfg: &crate::solver::SolverConfig,
    error_params: &crate::granularity::ErrorModelParams,
    leo: &crate::leo::LeoConfig,
) -> Result<Vec<MethodOutcome>> {
    if methods.is_empty() {
        return Err(Error::Precondition("at least one method required".into()));
    }
    let mut outcomes = Vec::new();
    for &n in n_grid {
        // Reference population: the proposed granularity at this fleet size.
        let k_ref = crate::granularity::select_type_count(
            n,
            &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            error_params,
            leo,
            grid.horizon_t,
        )?
        .k_star;
        let fleet = FleetConfig::balanced(n, k_ref, grid)?;
        let mut cell_cfg = trial_cfg.clone();
        cell_cfg.n_vehicles = n;
        for &method in methods {
            let outcome = run_method_cell(
                method, &fleet, &cell_cfg, grid, channel, snapshots, solver_cfg,
            );
            match outcome {
                Ok((per_trial, pooled)) => outcomes.push(MethodOutcome {
                    method,
                    n,
                    per_trial: Some(per_trial),
                    pooled: Some(pooled),
                }),
                Err(Error::Divergence { .. }) => outcomes.push(MethodOutcome {
                    method,
                    n,
                    per_trial: None,
                    pooled: None,
                }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(outcomes)
}

/// Solves one method on the reference fleet and simulates the paired trials.
pub fn run_method_cell(
    method: MethodKind,
    fleet: &FleetConfig,
    trial_cfg: &TrialConfig,
    grid: &Grid,
    channel: &ChannelParams,
    snapshots: &SnapshotTrace,
    solver_cfg: &crate::solver::SolverConfig,
) -> Result<(Vec<KpiReport>, KpiReport)> {
    let policies = solve_method_policies(method, fleet, grid, channel, snapshots, solver_cfg)?;
    run_trials(&policies, fleet, trial_cfg, snapshots, grid, channel)
}

/// Solves a method and maps its policies back onto the reference types.
pub fn solve_method_policies(
    method: MethodKind,
    fleet: &FleetConfig,
    grid: &Grid,
    channel: &ChannelParams,
    snapshots: &SnapshotTrace,
    solver_cfg: &crate::solver::SolverConfig,
) -> Result<MethodPolicies> {
    use crate::solver::baselines::{baseline_solve, BaselineKind};
    let identity_groups: Vec<Vec<usize>> = (0..fleet.k_types).map(|t| vec![t]).collect();
    match method {
        MethodKind::Proposed => {
            let sol = crate::solver::pdhg::pdhg_solve(fleet, solver_cfg, snapshots, grid, channel)?;
            MethodPolicies::from_groups(&sol.policies, &sol.coupling, &identity_groups, fleet.k_types)
        }
        MethodKind::Baseline(kind) => {
            let k_target = match kind {
                BaselineKind::GproxK1 | BaselineKind::SmfgK1 => 1,
                BaselineKind::FixedK2 => 2.min(fleet.k_types),
                BaselineKind::FixedK3 => 3.min(fleet.k_types),
            };
            let groups = fleet.merge_groups(k_target)?;
            let sol = baseline_solve(kind, fleet, solver_cfg, snapshots, grid, channel)?;
            MethodPolicies::from_groups(&sol.policies, &sol.coupling, &groups, fleet.k_types)
        }
    }
}

/// Mean and standard deviation of one KPI across per-trial reports.
pub fn kpi_mean_std(per_trial: &[KpiReport], f: impl Fn(&KpiReport) -> f64) -> (f64, f64) {
    let n = per_trial.len() as f64;
    let mean = per_trial.iter().map(&f).sum::<f64>() / n;
    let var = per_trial.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One-sided paired sign test: counts trials where `a < b` and returns the
/// exact binomial tail probability of at least that many wins under the
/// null p = 1/2; ties are dropped.
pub fn paired_sign_test(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    assert_eq!(a.len(), b.len());
    let mut wins = 0usize;
    let mut effective = 0usize;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            wins += 1;
            effective += 1;
        } else if x > y {
            effective += 1;
        }
    }
    // P(X >= wins), X ~ Binomial(effective, 1/2).
    let mut tail = 0.0;
    for k in wins..=effective {
        tail += binomial_pmf_half(effective, k);
    }
    (wins, effective, tail.min(1.0))
}

fn binomial_pmf_half(n: usize, k: usize) -> f64 {
    // ln C(n, k) - n ln 2 via lgamma-free accumulation.
    let mut ln_c = 0.0;
    for i in 0..k {
        ln_c += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
    }
    (ln_c - n as f64 * std::f64::consts::LN_2).exp()
}
