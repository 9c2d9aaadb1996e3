use hmfg_core::sim::*;
use hmfg_core::*;

fn main() {
    let grid = make_grid(50, 60, 10.0, 0.06).unwrap();
    let channel = ChannelParams::default();
    let snaps = generate_snapshots(&LeoConfig::static_topology(), grid.horizon_t, 7).unwrap();
    let solver_cfg = SolverConfig::default();
    let err = ErrorModelParams::default();
    let leo = LeoConfig::static_topology();
    let trial = TrialConfig {
        n_vehicles: 500,
        trials: 25,
        rng_seed: 42,
        ..Default::default()
    };
    let outcomes = run_comparison(
        &[MethodKind::Proposed, MethodKind::Baseline(BaselineKind::GproxK1)],
        &[500],
        &trial,
        &grid,
        &channel,
        &snaps,
        &solver_cfg,
        &err,
        &leo,
    )
    .unwrap();
    let get = |m: MethodKind| outcomes.iter().find(|o| o.method == m).unwrap();
    let prop = get(MethodKind::Proposed);
    let base = get(MethodKind::Baseline(BaselineKind::GproxK1));
    for (name, f) in [
        ("delay_ms", (|r: &KpiReport| r.mean_delay_ms) as fn(&KpiReport) -> f64),
        ("tput_mbps", |r| r.throughput_mbps),
        ("energy_nj", |r| r.energy_per_bit_nj),
        ("loss_pct", |r| r.packet_loss_pct),
        ("se_bpshz", |r| r.spectral_efficiency_bpshz),
        ("mec_cost", |r| r.mec_cost),
        ("qos_pct", |r| r.qos_satisfaction_pct),
    ] {
        let (pm, ps) = kpi_mean_std(prop.per_trial.as_ref().unwrap(), f);
        let (bm, bs) = kpi_mean_std(base.per_trial.as_ref().unwrap(), f);
        let a: Vec<f64> = prop.per_trial.as_ref().unwrap().iter().map(&f).collect();
        let b: Vec<f64> = base.per_trial.as_ref().unwrap().iter().map(&f).collect();
        let (wins, eff, p) = paired_sign_test(&a, &b);
        println!("{name:10} prop {pm:12.4} ± {ps:8.4}  gprox {bm:12.4} ± {bs:8.4}  wins(a<b) {wins}/{eff} p={p:.2e}");
    }
}
