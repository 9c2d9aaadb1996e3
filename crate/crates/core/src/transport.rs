//! One-dimensional optimal transport distances and the fleet heterogeneity
//! measure.
//!
//! On the line, W_p reduces to the L^p distance between quantile functions,
//! so every distance here is computed on a fixed midpoint probability mesh
//! u_r = (r + 1/2) / mesh with linear inverse-CDF interpolation. Flat CDF
//! regions invert to the leftmost attaining coordinate, which makes step
//! CDFs (point masses, empirical samples) deterministic.

use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Density, Grid};

/// Monotone CDF table on the state grid.
#[derive(Debug, Clone)]
pub struct CdfTable {
    pub coords: Vec<f64>,
    pub cumulative: Vec<f64>,
}

/// Quantile function sampled on an increasing probability mesh.
#[derive(Debug, Clone)]
pub struct QuantileTable {
    pub probabilities: Vec<f64>,
    pub values: Vec<f64>,
}

/// A one-dimensional distribution in a form distances can consume: either a
/// grid density slice (via its CDF) or an empirical sample.
#[derive(Debug, Clone)]
pub enum Marginal {
    GridDensity(CdfTable),
    Sample { sorted: Vec<f64> },
}

impl Marginal {
    /// Builds the grid representation from one density time slice.
    pub fn from_density_slice(slice: ArrayView1<f64>, grid: &Grid) -> Result<Self> {
        Ok(Marginal::GridDensity(cdf_from_slice(slice, grid)?))
    }

    pub fn from_density(d: &Density, time_index: usize, grid: &Grid) -> Result<Self> {
        Self::from_density_slice(d.slice(time_index), grid)
    }

    /// Empirical sample; must be nonempty.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Precondition("empty sample".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Marginal::Sample { sorted })
    }

    pub fn point_mass(x: f64) -> Self {
        Marginal::Sample { sorted: vec![x] }
    }

    /// Inverse CDF at probability `u` in (0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::GridDensity(t) => {
                let cdf = &t.cumulative;
                let n = cdf.len();
                // Leftmost index with F >= u.
                let mut lo = 0usize;
                let mut hi = n - 1;
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if cdf[mid] >= u {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                if lo == 0 {
                    return t.coords[0];
                }
                let (f0, f1) = (cdf[lo - 1], cdf[lo]);
                if f1 > f0 {
                    let w = (u - f0) / (f1 - f0);
                    t.coords[lo - 1] + w * (t.coords[lo] - t.coords[lo - 1])
                } else {
                    t.coords[lo]
                }
            }
            Marginal::Sample { sorted } => {
                let n = sorted.len();
                let idx = ((u * n as f64).ceil() as usize).clamp(1, n) - 1;
                sorted[idx]
            }
        }
    }

    /// Quantile function sampled on the midpoint mesh.
    pub fn quantile_table(&self, mesh: usize) -> QuantileTable {
        let probabilities: Vec<f64> = (0..mesh).map(|r| (r as f64 + 0.5) / mesh as f64).collect();
        let values = probabilities.iter().map(|&u| self.quantile(u)).collect();
        QuantileTable {
            probabilities,
            values,
        }
    }
}

/// Cumulative-trapezoid CDF of a normalized density slice, with F(0) = 0 and
/// F(q_max) = 1.
pub fn cdf_from_density(d: &Density, time_index: usize, grid: &Grid) -> Result<CdfTable> {
    cdf_from_slice(d.slice(time_index), grid)
}

fn cdf_from_slice(slice: ArrayView1<f64>, grid: &Grid) -> Result<CdfTable> {
    if slice.len() != grid.n_q {
        return Err(Error::Precondition(format!(
            "slice length {} does not match grid n_q {}",
            slice.len(),
            grid.n_q
        )));
    }
    if slice.iter().any(|&v| v < 0.0) {
        return Err(Error::Precondition("density slice has negative entries".into()));
    }
    let mass = grid.trapezoid(slice);
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Precondition(format!(
            "density slice mass {mass} is not normalized"
        )));
    }
    let mut cumulative = Vec::with_capacity(grid.n_q);
    cumulative.push(0.0);
    for i in 1..grid.n_q {
        let inc = 0.5 * (slice[i - 1] + slice[i]) * grid.dq;
        cumulative.push(cumulative[i - 1] + inc);
    }
    // Remove the residual quadrature drift so inversion sees F(q_max) = 1.
    let total = cumulative[grid.n_q - 1];
    for f in cumulative.iter_mut() {
        *f /= total;
    }
    let coords = (0..grid.n_q).map(|i| grid.coord(i)).collect();
    Ok(CdfTable { coords, cumulative })
}

fn quantile_diff_norm(a: &Marginal, b: &Marginal, mesh: usize, p: u32) -> f64 {
    debug_assert!(mesh > 0);
    let mut acc = 0.0;
    for r in 0..mesh {
        let u = (r as f64 + 0.5) / mesh as f64;
        let d = (a.quantile(u) - b.quantile(u)).abs();
        acc += match p {
            1 => d,
            _ => d * d,
        };
    }
    acc /= mesh as f64;
    match p {
        1 => acc,
        _ => acc.sqrt(),
    }
}

/// Wasserstein-2 distance via the quantile L^2 norm on a `mesh`-point
/// midpoint probability mesh.
pub fn w2_1d(a: &Marginal, b: &Marginal, mesh: usize) -> f64 {
    quantile_diff_norm(a, b, mesh, 2)
}

/// Wasserstein-1 distance via the quantile L^1 norm (equivalently the L^1
/// distance between CDFs).
pub fn w1_1d(a: &Marginal, b: &Marginal, mesh: usize) -> f64 {
    quantile_diff_norm(a, b, mesh, 1)
}

/// Average pairwise W_2 heterogeneity across the per-type densities at one
/// time slice: H_K = (2 / (K(K-1))) * sum_{k<k'} W_2(rho_k, rho_k').
///
/// Returns zero for a single type.
pub fn heterogeneity_measure(densities: &[Density], time_index: usize, grid: &Grid) -> Result<f64> {
    let k = densities.len();
    if k == 0 {
        return Err(Error::Precondition("no densities given".into()));
    }
    for d in densities {
        if d.values.dim() != (grid.n_q, grid.n_slices()) {
            return Err(Error::Precondition("density shape does not match grid".into()));
        }
    }
    if k == 1 {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let a = Marginal::from_density(&densities[i], time_index, grid)?;
            let b = Marginal::from_density(&densities[j], time_index, grid)?;
            acc += w2_1d(&a, &b, grid.n_q);
        }
    }
    Ok(2.0 * acc / (k as f64 * (k - 1) as f64))
}

/// Heterogeneity measure averaged over all stored time slices.
pub fn heterogeneity_measure_time_avg(densities: &[Density], grid: &Grid) -> Result<f64> {
    let mut acc = 0.0;
    for j in 0..grid.n_slices() {
        acc += heterogeneity_measure(densities, j, grid)?;
    }
    Ok(acc / grid.n_slices() as f64)
}

/// One row of the empirical-rate experiment output.
#[derive(Debug, Clone)]
pub struct RatePoint {
    pub n: usize,
    pub mean_w1: f64,
    pub mean_w2: f64,
    pub std_w1: f64,
    pub std_w2: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Empirical Wasserstein convergence experiment: for each sample size n,
/// draws n i.i.d. points from `base` by inverse-CDF sampling and measures
/// W_1 and W_2 between the empirical measure and the base distribution,
/// averaged over `trials` independently seeded repetitions.
///
/// `mesh` is the quantile mesh used for the distances; it must resolve the
/// smallest distances of interest, so it is a parameter rather than the
/// grid default.
pub fn empirical_rate_experiment(
    base: &Marginal,
    sample_sizes: &[usize],
    trials: usize,
    rng_seed: u64,
    mesh: usize,
) -> Result<Vec<RatePoint>> {
    if sample_sizes.iter().any(|&n| n < 1) {
        return Err(Error::Precondition("sample sizes must be >= 1".into()));
    }
    if trials < 1 {
        return Err(Error::Precondition("trials must be >= 1".into()));
    }
    let rows: Vec<RatePoint> = sample_sizes
        .iter()
        .enumerate()
        .map(|(ni, &n)| {
            let dists: Vec<(f64, f64)> = (0..trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = ChaCha8Rng::seed_from_u64(
                        rng_seed ^ (ni as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
                            ^ (trial as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9),
                    );
                    let sample: Vec<f64> =
                        (0..n).map(|_| base.quantile(rng.gen_range(f64::EPSILON..1.0))).collect();
                    let emp = Marginal::from_sample(&sample).expect("nonempty sample");
                    (w1_1d(&emp, base, mesh), w2_1d(&emp, base, mesh))
                })
                .collect();
            let mean = |f: &dyn Fn(&(f64, f64)) -> f64| {
                dists.iter().map(|d| f(d)).sum::<f64>() / trials as f64
            };
            let mean_w1 = mean(&|d| d.0);
            let mean_w2 = mean(&|d| d.1);
            let var = |f: &dyn Fn(&(f64, f64)) -> f64, m: f64| {
                dists.iter().map(|d| (f(d) - m).powi(2)).sum::<f64>() / trials as f64
            };
            RatePoint {
                n,
                mean_w1,
                mean_w2,
                std_w1: var(&|d| d.0, mean_w1).sqrt(),
                std_w2: var(&|d| d.1, mean_w2).sqrt(),
                trials,
                seed: rng_seed,
            }
        })
        .collect();
    Ok(rows)
}
