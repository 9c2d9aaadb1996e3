use hmfg_core::sim::*;
use hmfg_core::*;

fn main() {
    let grid = make_grid(50, 60, 10.0, 0.06).unwrap();
    let channel = ChannelParams::default();
    let snaps = generate_snapshots(&LeoConfig::static_topology(), grid.horizon_t, 7).unwrap();
    let solver_cfg = SolverConfig::default();
    let err = ErrorModelParams::default();
    let leo = LeoConfig::static_topology();
    let n = 500usize;
    let k_ref = select_type_count(n, &[1.0/3.0;3], &err, &leo, grid.horizon_t).unwrap().k_star;
    println!("k_ref = {k_ref}");
    let fleet = FleetConfig::balanced(n, k_ref, &grid).unwrap();
    let trial = TrialConfig { n_vehicles: n, trials: 1, rng_seed: 42, ..Default::default() };
    for method in [MethodKind::Proposed, MethodKind::Baseline(BaselineKind::GproxK1)] {
        let pol = solve_method_policies(method, &fleet, &grid, &channel, &snaps, &solver_cfg).unwrap();
        let r = simulate_trial(&pol, &fleet, &trial, &snaps, &grid, &channel, 42).unwrap();
        println!("== {}", method.label());
        for t in 0..k_ref {
            let vs: Vec<&VehicleStats> = r.vehicles.iter().filter(|v| v.type_index == t).collect();
            let nd = vs.len() as f64;
            let delay = vs.iter().map(|v| v.mean_delay_s).sum::<f64>() / nd * 1e3;
            let idle = vs.iter().map(|v| 1.0 - v.steps_with_rate as f64 / r.steps as f64).sum::<f64>() / nd;
            let rate = vs.iter().map(|v| v.mean_rate_units).sum::<f64>() / nd;
            let minq = vs.iter().map(|v| v.min_q).sum::<f64>() / nd;
            let drop = vs.iter().map(|v| v.dropped_units).sum::<f64>() / nd;
            println!("  type {t}: delay {delay:9.2} ms  idle {idle:.3}  rate {rate:7.2}  min_q {minq:.3}  drop {drop:.3}");
        }
        // policy transmit boundary per type: first node with p > 1e-6 at t=0 and t=30
        for t in 0..k_ref {
            let col0: Vec<usize> = (0..grid.n_q).filter(|&i| pol.policy_per_type[t][(i, 0)] > 1e-6).take(1).collect();
            let col30: Vec<usize> = (0..grid.n_q).filter(|&i| pol.policy_per_type[t][(i, 30)] > 1e-6).take(1).collect();
            println!("  type {t}: first transmit node j=0: {col0:?} j=30: {col30:?}");
        }
    }
}
