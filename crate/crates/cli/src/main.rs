//! Command-line front end: type-count selection, equilibrium solves, fleet
//! simulation, the five experiment categories, and log-log slope fitting.
//!
//! Every subcommand accepts `--config` (TOML), `--out` (output directory)
//! and `--seed`; outputs are CSV/JSON files whose metadata line carries the
//! config hash and seed, so identical inputs reproduce identical bytes
//! (timing files excluded). The worker-pool size is taken from
//! `HMFG_WORKERS` when set.

mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmfg_core::config::ConfigFile;
use hmfg_core::export;
use hmfg_core::*;

#[derive(Parser)]
#[command(name = "hmfg", about = "Heterogeneous mean-field fleet allocation toolkit")]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for result files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select the optimal type count for a fleet size.
    SelectK {
        #[arg(long)]
        n: usize,
        /// Comma-separated class proportions; balanced when omitted.
        #[arg(long)]
        proportions: Option<String>,
        /// Backhaul scenario: static, slow or fast.
        #[arg(long, default_value = "static")]
        leo: String,
    },
    /// Solve the equilibrium and export the solution fields.
    Solve,
    /// Solve, then run the Monte Carlo fleet simulation and export KPIs.
    Simulate,
    /// Run one of the experiment categories (1-5).
    Experiment {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=5))]
        number: u8,
    },
    /// Fit a log-log slope to a two-column CSV (x, y).
    FitSlope {
        file: PathBuf,
        /// Zero-based column of x values.
        #[arg(long, default_value_t = 0)]
        x_col: usize,
        /// Zero-based column of y values.
        #[arg(long, default_value_t = 1)]
        y_col: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(workers) = std::env::var("HMFG_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .ok();
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

/// Short hash of the canonical config plus seed for output metadata.
fn meta_line(cfg: &ConfigFile, seed: u64) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update(cfg.canonical_string().as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest[..6].iter().map(|b| format!("{b:02x}")).collect();
    format!("config_hash={hex} seed={seed}")
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.config)?;
    let meta = meta_line(&cfg, cli.seed);
    match cli.command {
        Command::SelectK {
            n,
            proportions,
            leo,
        } => {
            let props = match proportions {
                Some(csv) => csv
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|e| {
                            Error::Config(format!("bad proportion '{s}': {e}"))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?,
                None => vec![1.0 / 3.0; 3],
            };
            let leo_cfg = match leo.as_str() {
                "static" => LeoConfig::static_topology(),
                "slow" => LeoConfig::slow(),
                "fast" => LeoConfig::fast(),
                other => return Err(Error::Config(format!("unknown LEO scenario '{other}'"))),
            };
            let grid = cfg.grid()?;
            let result = select_type_count(n, &props, &cfg.error_model()?, &leo_cfg, grid.horizon_t)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&result)
                    .map_err(|e| Error::Config(format!("json: {e}")))?
            );
            Ok(())
        }
        Command::Solve => {
            let grid = cfg.grid()?;
            let channel = cfg.channel();
            let fleet = cfg.fleet(&grid)?;
            let solver_cfg = cfg.solver()?;
            let leo_cfg = cfg.leo()?;
            let snaps = generate_snapshots(&leo_cfg, grid.horizon_t, cli.seed)?;
            let solution = pdhg_solve(&fleet, &solver_cfg, &snaps, &grid, &channel)?;
            export::write_solution_fields(&cli.out.join("solution.csv"), &solution, &grid, &meta)?;
            export::write_residual_history(&cli.out.join("residuals.csv"), &solution, &meta)?;
            export::write_snapshot_trace(
                &cli.out.join("snapshots.csv"),
                &snaps,
                leo_cfg.mu,
                &meta,
            )?;
            println!(
                "converged={} iterations={} final_residual={:.3e}",
                solution.converged,
                solution.iterations_used,
                solution.residual_history.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Simulate => {
            let grid = cfg.grid()?;
            let channel = cfg.channel();
            let fleet = cfg.fleet(&grid)?;
            let solver_cfg = cfg.solver()?;
            let leo_cfg = cfg.leo()?;
            let mut trial = cfg.trial();
            trial.rng_seed = cli.seed;
            let snaps = generate_snapshots(&leo_cfg, grid.horizon_t, cli.seed)?;
            let solution = pdhg_solve(&fleet, &solver_cfg, &snaps, &grid, &channel)?;
            let groups: Vec<Vec<usize>> = (0..fleet.k_types).map(|t| vec![t]).collect();
            let method = MethodPolicies::from_groups(
                &solution.policies,
                &solution.coupling,
                &groups,
                fleet.k_types,
            )?;
            let (per_trial, pooled) =
                hmfg_core::sim::run_trials(&method, &fleet, &trial, &snaps, &grid, &channel)?;
            experiments::write_kpi_table(&cli.out.join("kpis.csv"), "solved", fleet.n_vehicles, &per_trial, &pooled, &meta)?;
            println!(
                "trials={} mean_delay_ms={:.2} throughput_mbps={:.3} loss_pct={:.3}",
                per_trial.len(),
                pooled.mean_delay_ms,
                pooled.throughput_mbps,
                pooled.packet_loss_pct
            );
            Ok(())
        }
        Command::Experiment { number } => match number {
            1 => experiments::run_category_i(&cfg, &cli.out, cli.seed, &meta),
            2 => experiments::run_category_ii(&cfg, &cli.out, cli.seed, &meta),
            3 => experiments::run_category_iii(&cfg, &cli.out, cli.seed, &meta),
            4 => experiments::run_category_iv(&cfg, &cli.out, cli.seed, &meta),
            5 => experiments::run_category_v(&cfg, &cli.out, cli.seed, &meta),
            _ => unreachable!(),
        },
        Command::FitSlope { file, x_col, y_col } => {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::Io {
                path: file.display().to_string(),
                detail: e.to_string(),
            })?;
            let mut pts = Vec::new();
            for line in text.lines() {
                if line.starts_with('#') || line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() <= x_col.max(y_col) {
                    continue;
                }
                let parse = |s: &str| s.trim().parse::<f64>().ok();
                if let (Some(x), Some(y)) = (parse(fields[x_col]), parse(fields[y_col])) {
                    pts.push((x, y));
                }
            }
            let (slope, intercept, stderr) = fit_loglog_slope(&pts)?;
            println!(
                "{{\"slope\": {slope}, \"intercept\": {intercept}, \"stderr\": {stderr}, \"points\": {}}}",
                pts.len()
            );
            Ok(())
        }
    }
}
