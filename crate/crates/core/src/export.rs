//! CSV import/export of traces and results. Every writer emits a metadata
//! comment line (`# key=value ...`) followed by a header row, so outputs are
//! self-describing and replayable.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::leo::{bottleneck_bandwidth, phi_sat, LeoConfig, Snapshot, SnapshotTrace};
use crate::solver::EquilibriumSolution;
use crate::transport::RatePoint;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(path, e))?;
    }
    std::fs::File::create(path).map_err(|e| io_err(path, e))
}

/// Writes the rate-experiment table: n, mean_w1, mean_w2, std_w1, std_w2,
/// trials, seed.
pub fn write_rate_experiment(path: &Path, rows: &[RatePoint], meta: &str) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# {meta}").map_err(|e| io_err(path, e))?;
    writeln!(f, "n,mean_w1,mean_w2,std_w1,std_w2,trials,seed").map_err(|e| io_err(path, e))?;
    for r in rows {
        writeln!(
            f,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{},{}",
            r.n, r.mean_w1, r.mean_w2, r.std_w1, r.std_w2, r.trials, r.seed
        )
        .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Writes a snapshot trace: window_index, start, end, bottleneck_mbps,
/// phi_sat.
pub fn write_snapshot_trace(
    path: &Path,
    trace: &SnapshotTrace,
    mu: f64,
    meta: &str,
) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# {meta} constant_fallback={}", trace.constant_fallback)
        .map_err(|e| io_err(path, e))?;
    writeln!(f, "window_index,start,end,bottleneck_mbps,phi_sat").map_err(|e| io_err(path, e))?;
    for s in &trace.snapshots {
        writeln!(
            f,
            "{},{:.6},{:.6},{:.9},{:.12e}",
            s.window_index,
            s.start_time,
            s.end_time,
            bottleneck_bandwidth(s)?,
            phi_sat(s, mu)?
        )
        .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Reads a snapshot trace written by [`write_snapshot_trace`]. Only the
/// bottleneck is recoverable, so each window gets a single link at the
/// recorded bottleneck rate; surcharges are identical to the original.
pub fn read_snapshot_trace(path: &Path, cfg: &LeoConfig) -> Result<SnapshotTrace> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut snapshots = Vec::new();
    let mut constant_fallback = false;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            constant_fallback = rest.contains("constant_fallback=true");
            continue;
        }
        if line.starts_with("window_index") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(io_err(path, format!("malformed row '{line}'")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|e| io_err(path, format!("bad number '{s}': {e}")))
        };
        snapshots.push(Snapshot {
            window_index: fields[0]
                .trim()
                .parse()
                .map_err(|e| io_err(path, format!("bad index: {e}")))?,
            start_time: parse(fields[1])?,
            end_time: parse(fields[2])?,
            link_rates: vec![parse(fields[3])?; cfg.links_per_path.max(1)],
        });
    }
    if snapshots.is_empty() {
        return Err(io_err(path, "no snapshot rows"));
    }
    Ok(SnapshotTrace {
        snapshots,
        constant_fallback,
    })
}

/// Writes per-type density/potential/policy grids: type, time_index,
/// state_index, rho, phi, power.
pub fn write_solution_fields(
    path: &Path,
    solution: &EquilibriumSolution,
    grid: &Grid,
    meta: &str,
) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# {meta}").map_err(|e| io_err(path, e))?;
    writeln!(f, "type,time_index,state_index,rho,phi,power").map_err(|e| io_err(path, e))?;
    for t in 0..solution.densities.len() {
        for j in 0..grid.n_slices() {
            for i in 0..grid.n_q {
                writeln!(
                    f,
                    "{},{},{},{:.9e},{:.9e},{:.9e}",
                    t,
                    j,
                    i,
                    solution.densities[t].values[(i, j)],
                    solution.potentials[t].values[(i, j)],
                    solution.policies[t][(i, j)]
                )
                .map_err(|e| io_err(path, e))?;
            }
        }
    }
    Ok(())
}

/// Writes the residual history: iteration, residual, step_product, h_k
/// (plus the adaptation diagnostics).
pub fn write_residual_history(
    path: &Path,
    solution: &EquilibriumSolution,
    meta: &str,
) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# {meta}").map_err(|e| io_err(path, e))?;
    writeln!(f, "iteration,residual,step_product,xi,h_k,c_h,delta_sat").map_err(|e| io_err(path, e))?;
    for r in &solution.trace {
        writeln!(
            f,
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
            r.iteration, r.residual, r.step_product, r.xi, r.h_k, r.c_h, r.delta_sat
        )
        .map_err(|e| io_err(path, e))?;
    }
    Ok(())
}

/// Generic CSV writer: metadata comment, header, then preformatted rows.
pub fn write_rows(path: &Path, meta: &str, header: &str, rows: &[String]) -> Result<()> {
    let mut f = create(path)?;
    writeln!(f, "# {meta}").map_err(|e| io_err(path, e))?;
    writeln!(f, "{header}").map_err(|e| io_err(path, e))?;
    for row in rows {
        writeln!(f, "{row}").map_err(|e| io_err(path, e))?;
    }
    Ok(())
}
