use hmfg_core::sim::*;
use hmfg_core::*;

fn fleet_with(n: usize, k: usize, grid: &Grid, d_base: f64, d_spread: f64, s_base: f64, s_spread: f64) -> FleetConfig {
    let types: Vec<TypeParams> = (0..k)
        .map(|i| {
            let theta = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
            let mut t = hmfg_core::grid::params_at_theta(theta, 1.0);
            t.data_rate = DataRateProfile::Constant { rate: d_base + d_spread * theta };
            t.sigma = s_base + s_spread * theta;
            t
        })
        .collect();
    let inits = hmfg_core::grid::default_initial_profiles(k, grid);
    FleetConfig::new(n, vec![1.0 / k as f64; k], types, inits).unwrap()
}

fn main() {
    let grid = make_grid(50, 60, 10.0, 0.06).unwrap();
    let channel = ChannelParams::default();
    let snaps = generate_snapshots(&LeoConfig::static_topology(), grid.horizon_t, 7).unwrap();
    let n = 500usize;
    let k_ref = 5usize;
    let trial = TrialConfig { n_vehicles: n, trials: 25, rng_seed: 42, ..Default::default() };
    for kappa in [0.25f64, 0.3, 0.35, 0.45] {
        for (d_base, d_spread) in [(20.0, 20.0), (25.0, 25.0), (30.0, 20.0)] {
            for s_base in [1.0, 1.6] {
                let mut cfg = SolverConfig::default();
                cfg.kappa = kappa;
                let fleet = fleet_with(n, k_ref, &grid, d_base, d_spread, s_base, 0.4);
                let prop = match solve_method_policies(MethodKind::Proposed, &fleet, &grid, &channel, &snaps, &cfg) {
                    Ok(p) => p, Err(e) => { println!("kappa={kappa} d=({d_base},{d_spread}) s={s_base}: prop solve failed: {e}"); continue; } };
                let base = match solve_method_policies(MethodKind::Baseline(BaselineKind::GproxK1), &fleet, &grid, &channel, &snaps, &cfg) {
                    Ok(p) => p, Err(e) => { println!("kappa={kappa} d=({d_base},{d_spread}) s={s_base}: base solve failed: {e}"); continue; } };
                let (pt, _) = run_trials(&prop, &fleet, &trial, &snaps, &grid, &channel).unwrap();
                let (bt, _) = run_trials(&base, &fleet, &trial, &snaps, &grid, &channel).unwrap();
                let delays_p: Vec<f64> = pt.iter().map(|r| r.mean_delay_ms).collect();
                let delays_b: Vec<f64> = bt.iter().map(|r| r.mean_delay_ms).collect();
                let tput_p: Vec<f64> = pt.iter().map(|r| r.throughput_mbps).collect();
                let tput_b: Vec<f64> = bt.iter().map(|r| r.throughput_mbps).collect();
                let (dw, de, _) = paired_sign_test(&delays_p, &delays_b);
                let (tw, te, _) = paired_sign_test(&tput_b, &tput_p); // wins where base < prop
                println!(
                    "kappa={kappa:<5} d=({d_base:>2},{d_spread:>2}) s={s_base}: delay {:7.1} vs {:7.1} (wins {dw}/{de})  tput {:6.3} vs {:6.3} (wins {tw}/{te})",
                    delays_p.iter().sum::<f64>()/25.0, delays_b.iter().sum::<f64>()/25.0,
                    tput_p.iter().sum::<f64>()/25.0, tput_b.iter().sum::<f64>()/25.0
                );
            }
        }
    }
}
