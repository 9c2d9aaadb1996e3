//! Scratch harness for solver calibration runs.

use hmfg_core::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let primal: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2e-4);
    let dual: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let iters: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(500);
    let fixed: Option<f64> = args.get(5).and_then(|s| s.parse().ok());

    let grid = match std::env::var("TUNE_GRID").as_deref() {
        Ok("coarse") => make_grid(25, 30, 10.0, 0.06).unwrap(),
        _ => make_grid(50, 60, 10.0, 0.06).unwrap(),
    };
    let fleet = FleetConfig::balanced(1000, k, &grid).unwrap();
    let mut channel = ChannelParams::default();
    if let Ok(v) = std::env::var("TUNE_IOTA") {
        channel.interference_gain_scale = v.parse().unwrap();
    }
    let snaps = generate_snapshots(&LeoConfig::static_topology(), grid.horizon_t, 7).unwrap();
    let mut cfg = SolverConfig {
        max_iterations: iters,
        primal_scale: primal,
        dual_scale: dual,
        step_mode: match fixed {
            Some(p) => StepMode::Fixed(p),
            None => StepMode::Adaptive,
        },
        ..SolverConfig::default()
    };
    if let Ok(v) = std::env::var("TUNE_VARRHO") {
        cfg.varrho = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("TUNE_KAPPA") {
        cfg.kappa = v.parse().unwrap();
    }
    if let Ok(v) = std::env::var("TUNE_TOL") {
        cfg.tolerance = v.parse().unwrap();
    }
    let t0 = std::time::Instant::now();
    let sol = pdhg_run(&fleet, &cfg, &snaps, &grid, &channel).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "k={k} primal={primal:.1e} dual={dual:.1e} converged={} diverged={:?} iters={} time={dt:.2}s",
        sol.converged, sol.diverged, sol.iterations_used
    );
    let h = &sol.residual_history;
    for (i, r) in h.iter().enumerate() {
        if i < 5 || i % 25 == 0 || i + 1 == h.len() {
            let rec = &sol.trace[i];
            println!(
                "  it {:4}  res {:10.4e}  prod {:.4}  hk {:.3} ch {:.3}",
                i + 1,
                r,
                rec.step_product,
                rec.h_k,
                rec.c_h
            );
        }
    }
    // Compare against the Picard oracle.
    let t0 = std::time::Instant::now();
    let pic = picard_solve(&fleet, &cfg, &snaps, &grid, &channel).unwrap();
    println!(
        "picard converged={} iters={} time={:.2}s last_change={:.3e}",
        pic.converged,
        pic.iterations_used,
        t0.elapsed().as_secs_f64(),
        pic.residual_history.last().unwrap_or(&f64::NAN)
    );
    for t in 0..k {
        let a = Marginal::from_density(&sol.densities[t], grid.n_t, &grid).unwrap();
        let b = Marginal::from_density(&pic.densities[t], grid.n_t, &grid).unwrap();
        println!("  type {t}: terminal W2(pdhg, picard) = {:.4e}", w2_1d(&a, &b, grid.n_q));
    }
}
