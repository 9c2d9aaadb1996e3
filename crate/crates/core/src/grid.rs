//! Discretized state-time domain and the field/parameter records shared by
//! every other module.
//!
//! The state is a scalar data-queue length q on [0, q_max], node-centered
//! with both endpoints included, so the trapezoid rule is the natural
//! quadrature. The time axis stores `n_t + 1` slices including t = 0 and
//! t = T: the backward value sweep needs the terminal slice and the forward
//! density evolution needs the initial one.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mass tolerance enforced by [`normalize_density`].
pub const MASS_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Uniform node-centered grid over [0, q_max] x [0, horizon_t].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// State points, including both endpoints.
    pub n_q: usize,
    /// Time steps; the time axis stores `n_t + 1` slices.
    pub n_t: usize,
    /// Queue capacity (data units).
    pub q_max: f64,
    /// Horizon in seconds; `dt = horizon_t / n_t`.
    pub horizon_t: f64,
    /// State spacing `q_max / (n_q - 1)`.
    pub dq: f64,
    /// Time spacing `horizon_t / n_t`.
    pub dt: f64,
}

/// Builds a [`Grid`], validating sizes and deriving spacings.
pub fn make_grid(n_q: usize, n_t: usize, q_max: f64, horizon_t: f64) -> Result<Grid> {
    if n_q < 3 {
        return Err(Error::Config(format!("n_q must be >= 3, got {n_q}")));
    }
    if n_t < 1 {
        return Err(Error::Config(format!("n_t must be >= 1, got {n_t}")));
    }
    if !(q_max > 0.0) || !(horizon_t > 0.0) {
        return Err(Error::Config(format!(
            "q_max and horizon_t must be positive, got {q_max} and {horizon_t}"
        )));
    }
    Ok(Grid {
        n_q,
        n_t,
        q_max,
        horizon_t,
        dq: q_max / (n_q - 1) as f64,
        dt: horizon_t / n_t as f64,
    })
}

impl Grid {
    /// Coordinate of state node `i`, reproducible bit-exactly from the index.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        i as f64 * self.dq
    }

    /// Time of slice `j` (j in 0..=n_t).
    #[inline]
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// Nearest state-node index for a coordinate, clamped to the domain.
    #[inline]
    pub fn nearest_index(&self, q: f64) -> usize {
        let i = (q / self.dq).round();
        (i.max(0.0) as usize).min(self.n_q - 1)
    }

    /// Number of stored time slices (`n_t + 1`).
    #[inline]
    pub fn n_slices(&self) -> usize {
        self.n_t + 1
    }

    /// Trapezoid integral of a state slice.
    pub fn trapezoid(&self, slice: ArrayView1<f64>) -> f64 {
        debug_assert_eq!(slice.len(), self.n_q);
        let inner: f64 = slice.iter().skip(1).take(self.n_q - 2).sum();
        (inner + 0.5 * (slice[0] + slice[self.n_q - 1])) * self.dq
    }

    /// Trapezoid quadrature weight of node `i` (dq/2 at the endpoints).
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n_q - 1 {
            0.5 * self.dq
        } else {
            self.dq
        }
    }
}

// ---------------------------------------------------------------------------
// Fields on the grid
// ---------------------------------------------------------------------------

/// Per-type probability density rho(q, t), shape (n_q, n_t + 1).
///
/// Nonnegative, and after projection each time slice trapezoid-integrates
/// to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub values: Array2<f64>,
}

/// Dual potential phi(q, t), same shape as [`Density`].
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential {
    pub values: Array2<f64>,
}

/// Momentum field m = rho * Gamma with Gamma the queue drift.
///
/// Pointwise |m| <= rho * (R_max + D_max).
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub values: Array2<f64>,
}

impl Density {
    /// Zero-initialized field of grid shape.
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: Array2::zeros((grid.n_q, grid.n_slices())),
        }
    }

    /// Broadcasts one state profile to every time slice and normalizes.
    pub fn from_initial_profile(grid: &Grid, profile: &Array1<f64>) -> Result<Self> {
        let mut values = Array2::zeros((grid.n_q, grid.n_slices()));
        for j in 0..grid.n_slices() {
            values.column_mut(j).assign(profile);
        }
        normalize_density(Density { values }, grid)
    }

    pub fn slice(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    /// Largest per-slice deviation of the trapezoid mass from one.
    pub fn max_mass_error(&self, grid: &Grid) -> f64 {
        (0..grid.n_slices())
            .map(|j| (grid.trapezoid(self.slice(j)) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

impl DualPotential {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            values: Array2::zeros((grid.n_q, grid.n_slices())),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Clips negative entries to zero, then rescales every time slice so the
/// trapezoid integral is one.
///
/// A slice with no positive mass cannot be rescaled and is reported as a
/// degenerate-density error.
pub fn normalize_density(mut d: Density, grid: &Grid) -> Result<Density> {
    for j in 0..grid.n_slices() {
        let mut col = d.values.column_mut(j);
        col.mapv_inplace(|v| v.max(0.0));
        let mass = {
            let inner: f64 = col.iter().skip(1).take(grid.n_q - 2).sum();
            (inner + 0.5 * (col[0] + col[grid.n_q - 1])) * grid.dq
        };
        if mass <= 0.0 {
            return Err(Error::DegenerateDensity(format!(
                "time slice {j} has no positive mass"
            )));
        }
        col.mapv_inplace(|v| v / mass);
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Data generation rate D(t) in data units per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataRateProfile {
    Constant { rate: f64 },
    /// Linear ramp from `start` at t = 0 to `end` at t = horizon.
    Ramp { start: f64, end: f64 },
}

impl DataRateProfile {
    pub fn at(&self, t: f64, horizon_t: f64) -> f64 {
        match *self {
            DataRateProfile::Constant { rate } => rate,
            DataRateProfile::Ramp { start, end } => {
                let s = (t / horizon_t).clamp(0.0, 1.0);
                start + (end - start) * s
            }
        }
    }

    pub fn max_over_horizon(&self) -> f64 {
        match *self {
            DataRateProfile::Constant { rate } => rate,
            DataRateProfile::Ramp { start, end } => start.max(end),
        }
    }
}

/// Per-type heterogeneity parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeParams {
    /// Type parameter in [0, 1]; strictly increasing across a fleet with
    /// theta_1 = 0 and theta_K = 1 whenever K >= 2.
    pub theta: f64,
    /// Energy weight beta_1 > 0.
    pub beta1: f64,
    /// Offloading weight beta_2 > 0.
    pub beta2: f64,
    /// Terminal queue penalty C >= 0.
    pub terminal_c: f64,
    /// Queue diffusion sigma > 0 (data units per sqrt-second).
    pub sigma: f64,
    /// Data generation rate profile D(t).
    pub data_rate: DataRateProfile,
}

impl TypeParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [0,1], got {}", self.theta)));
        }
        if !(self.beta1 > 0.0) || !(self.beta2 > 0.0) {
            return Err(Error::Config("beta1 and beta2 must be positive".into()));
        }
        if self.terminal_c < 0.0 {
            return Err(Error::Config("terminal_c must be nonnegative".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Wireless channel model parameters.
///
/// The gain model is WINNER+ B1 line-of-sight path loss at carrier
/// `carrier_ghz`, with log-normal shadowing applied per vehicle in the
/// Monte Carlo simulator. The solver itself uses the deterministic gain at
/// `solver_distance_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Bandwidth B in Hz.
    pub bandwidth_b: f64,
    /// Noise variance sigma_c^2 in W.
    pub noise: f64,
    /// Maximum transmission power in W.
    pub p_max: f64,
    /// Carrier frequency in GHz.
    pub carrier_ghz: f64,
    /// Path-loss reference distance d_0 in meters.
    pub d0_m: f64,
    /// Largest vehicle-RSU distance drawn in simulation.
    pub max_distance_m: f64,
    /// Log-normal shadowing standard deviation in dB.
    pub shadowing_db: f64,
    /// Representative distance used for the solver's type-level gain.
    pub solver_distance_m: f64,
    /// Conversion from bits to queue data units (1 unit = 1 Mbit by default).
    pub data_units_per_bit: f64,
    /// Scale factor mapping a transmitter's direct-link gain to the gain it
    /// presents as interference at other receivers.
    pub interference_gain_scale: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            bandwidth_b: 1.0e7,
            noise: 1.0e-13,
            p_max: 0.2,
            carrier_ghz: 5.9,
            d0_m: 100.0,
            max_distance_m: 500.0,
            shadowing_db: 8.0,
            solver_distance_m: 250.0,
            data_units_per_bit: 1.0e-6,
            interference_gain_scale: 2.0e-5,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_max < 0.0 {
            return Err(Error::Config("p_max must be nonnegative".into()));
        }
        let fields = [
            ("bandwidth_b", self.bandwidth_b),
            ("noise", self.noise),
            ("carrier_ghz", self.carrier_ghz),
            ("d0_m", self.d0_m),
            ("max_distance_m", self.max_distance_m),
            ("solver_distance_m", self.solver_distance_m),
            ("data_units_per_bit", self.data_units_per_bit),
        ];
        for (name, v) in fields {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }

    /// WINNER+ B1 LoS path loss in dB at distance `d_m` meters.
    pub fn path_loss_db(&self, d_m: f64) -> f64 {
        22.7 * d_m.max(1.0).log10() + 41.0 + 20.0 * (self.carrier_ghz / 5.0).log10()
    }

    /// Linear channel power gain at distance `d_m`, no shadowing.
    pub fn gain_at(&self, d_m: f64) -> f64 {
        10f64.powf(-self.path_loss_db(d_m) / 10.0)
    }

    /// Deterministic type-level gain used by the equilibrium solver.
    pub fn solver_gain(&self) -> f64 {
        self.gain_at(self.solver_distance_m)
    }

    /// Converts a rate in bit/s to queue data units per second.
    #[inline]
    pub fn to_data_units(&self, rate_bps: f64) -> f64 {
        rate_bps * self.data_units_per_bit
    }
}

// ---------------------------------------------------------------------------
// Fleet configuration
// ---------------------------------------------------------------------------

/// Table-style anchor values for the three reference vehicle classes
/// (passenger cars, freight trucks, autonomous vehicles).
const ANCHOR_THETA: [f64; 3] = [0.0, 0.5, 1.0];
const ANCHOR_BETA1: [f64; 3] = [0.5, 0.7, 1.0];
const ANCHOR_BETA2: [f64; 3] = [1.0, 0.8, 0.6];
const TERMINAL_C: f64 = 0.5;
/// Data generation D(theta) = D_BASE + D_SPREAD * theta (units/s).
const D_BASE: f64 = 25.0;
const D_SPREAD: f64 = 25.0;
/// Diffusion sigma(theta) = SIGMA_BASE + SIGMA_SPREAD * theta.
const SIGMA_BASE: f64 = 1.0;
const SIGMA_SPREAD: f64 = 0.4;

fn interp_anchors(theta: f64, ys: &[f64; 3]) -> f64 {
    let xs = &ANCHOR_THETA;
    if theta <= xs[1] {
        ys[0] + (ys[1] - ys[0]) * (theta - xs[0]) / (xs[1] - xs[0])
    } else {
        ys[1] + (ys[2] - ys[1]) * (theta - xs[1]) / (xs[2] - xs[1])
    }
}

/// Type parameters at a point of the theta continuum, interpolating the
/// three anchor classes. `spread_scale` widens or narrows the heterogeneity
/// around the mid value (used by the heterogeneity-scale sweep).
pub fn params_at_theta(theta: f64, spread_scale: f64) -> TypeParams {
    let centered = |v: f64, mid: f64| mid + (v - mid) * spread_scale;
    let beta1 = centered(interp_anchors(theta, &ANCHOR_BETA1), interp_anchors(0.5, &ANCHOR_BETA1));
    let beta2 = centered(interp_anchors(theta, &ANCHOR_BETA2), interp_anchors(0.5, &ANCHOR_BETA2));
    let d = centered(D_BASE + D_SPREAD * theta, D_BASE + D_SPREAD * 0.5);
    let sigma = centered(SIGMA_BASE + SIGMA_SPREAD * theta, SIGMA_BASE + SIGMA_SPREAD * 0.5);
    TypeParams {
        theta,
        beta1,
        beta2,
        terminal_c: TERMINAL_C,
        sigma,
        data_rate: DataRateProfile::Constant { rate: d },
    }
}

/// Fleet composition: population size, type partition, per-type parameters
/// and initial densities. Immutable after construction.
#[derive(Debug, Clone)]
pub struct FleetConfig {
    pub n_vehicles: usize,
    pub k_types: usize,
    /// Population proportions, summing to one.
    pub proportions: Vec<f64>,
    pub types: Vec<TypeParams>,
    /// Initial state distribution per type.
    pub initial_densities: Vec<Array1<f64>>,
}

impl FleetConfig {
    /// Builds a K-type fleet from explicit pieces, validating the simplex
    /// and ordering invariants.
    pub fn new(
        n_vehicles: usize,
        proportions: Vec<f64>,
        types: Vec<TypeParams>,
        initial_densities: Vec<Array1<f64>>,
    ) -> Result<Self> {
        let k = types.len();
        if k == 0 || proportions.len() != k || initial_densities.len() != k {
            return Err(Error::Config(
                "proportions, types and initial densities must share one nonempty length".into(),
            ));
        }
        if n_vehicles == 0 {
            return Err(Error::Config("n_vehicles must be positive".into()));
        }
        let sum: f64 = proportions.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("proportions sum to {sum}, expected 1")));
        }
        if proportions.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("every proportion must be strictly positive".into()));
        }
        for tp in &types {
            tp.validate()?;
        }
        if k >= 2 {
            if types[0].theta != 0.0 || types[k - 1].theta != 1.0 {
                return Err(Error::Config(
                    "type parameters must start at theta = 0 and end at theta = 1".into(),
                ));
            }
            if types.windows(2).any(|w| w[0].theta >= w[1].theta) {
                return Err(Error::Config("theta values must be strictly increasing".into()));
            }
        }
        Ok(Self {
            n_vehicles,
            k_types: k,
            proportions,
            types,
            initial_densities,
        })
    }

    /// Balanced K-type fleet with equally spaced theta in [0, 1] and the
    /// default truncated-Gaussian initial densities (distinct centers at
    /// q_max * k / (K + 1), std 0.1 * q_max).
    pub fn balanced(n_vehicles: usize, k: usize, grid: &Grid) -> Result<Self> {
        Self::with_proportions(n_vehicles, vec![1.0 / k as f64; k], grid, 1.0)
    }

    /// Fleet with arbitrary proportions over equally spaced theta values.
    pub fn with_proportions(
        n_vehicles: usize,
        proportions: Vec<f64>,
        grid: &Grid,
        spread_scale: f64,
    ) -> Result<Self> {
        let k = proportions.len();
        if k == 0 {
            return Err(Error::Config("proportions must be nonempty".into()));
        }
        let types: Vec<TypeParams> = (0..k)
            .map(|i| {
                let theta = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
                params_at_theta(theta, spread_scale)
            })
            .collect();
        let initial_densities = default_initial_profiles(k, grid);
        Self::new(n_vehicles, proportions, types, initial_densities)
    }

    /// Class counts N_k = round(lambda_k * N), corrected by largest
    /// remainder so they sum exactly to N.
    pub fn class_counts(&self) -> Vec<usize> {
        largest_remainder_counts(&self.proportions, self.n_vehicles)
    }

    /// Contiguous partition of the theta-ordered types into `k_target`
    /// groups of near-equal cumulative population.
    pub fn merge_groups(&self, k_target: usize) -> Result<Vec<Vec<usize>>> {
        if k_target == 0 || k_target > self.k_types {
            return Err(Error::Config(format!(
                "cannot merge {} types into {k_target}",
                self.k_types
            )));
        }
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k_target];
        let mut cum = 0.0;
        for (i, &lam) in self.proportions.iter().enumerate() {
            let g = ((cum + lam / 2.0) * k_target as f64).floor() as usize;
            groups[g.min(k_target - 1)].push(i);
            cum += lam;
        }
        // Guarantee non-empty groups (possible with very skewed proportions).
        for g in 0..k_target {
            if groups[g].is_empty() {
                let donor = (0..k_target).find(|&h| groups[h].len() > 1).ok_or_else(|| {
                    Error::Config("cannot form nonempty merged groups".into())
                })?;
                let moved = if donor < g {
                    groups[donor].pop().unwrap()
                } else {
                    groups[donor].remove(0)
                };
                groups[g].push(moved);
                groups[g].sort_unstable();
            }
        }
        Ok(groups)
    }

    /// Re-aggregates the fleet to `k_target` types by merging adjacent
    /// theta-ordered types into contiguous groups of near-equal population,
    /// using population-weighted parameter means and mixture initial
    /// densities.
    pub fn merged(&self, k_target: usize, grid: &Grid) -> Result<FleetConfig> {
        if k_target == self.k_types {
            return Ok(self.clone());
        }
        let groups = self.merge_groups(k_target)?;

        let mut proportions = Vec::with_capacity(k_target);
        let mut types = Vec::with_capacity(k_target);
        let mut initial_densities = Vec::with_capacity(k_target);
        for group in &groups {
            let lam_g: f64 = group.iter().map(|&i| self.proportions[i]).sum();
            let wmean = |f: &dyn Fn(&TypeParams) -> f64| -> f64 {
                group
                    .iter()
                    .map(|&i| self.proportions[i] * f(&self.types[i]))
                    .sum::<f64>()
                    / lam_g
            };
            let theta = wmean(&|t| t.theta);
            let rate = wmean(&|t| t.data_rate.max_over_horizon());
            types.push(TypeParams {
                theta,
                beta1: wmean(&|t| t.beta1),
                beta2: wmean(&|t| t.beta2),
                terminal_c: wmean(&|t| t.terminal_c),
                sigma: wmean(&|t| t.sigma),
                data_rate: DataRateProfile::Constant { rate },
            });
            let mut mixture = Array1::<f64>::zeros(grid.n_q);
            for &i in group {
                mixture = mixture + &(self.initial_densities[i].clone() * (self.proportions[i] / lam_g));
            }
            initial_densities.push(mixture);
            proportions.push(lam_g);
        }
        // Merged thetas no longer span [0, 1]; rescale to keep the ordering
        // invariant when more than one group remains.
        if k_target >= 2 {
            let lo = types[0].theta;
            let hi = types[k_target - 1].theta;
            for t in &mut types {
                t.theta = (t.theta - lo) / (hi - lo);
            }
        }
        // Correct any rounding drift in the merged simplex.
        let total: f64 = proportions.iter().sum();
        for p in &mut proportions {
            *p /= total;
        }
        FleetConfig::new(self.n_vehicles, proportions, types, initial_densities)
    }

    /// Largest diffusion coefficient across types.
    pub fn sigma_max(&self) -> f64 {
        self.types.iter().map(|t| t.sigma).fold(0.0, f64::max)
    }

    /// Largest data generation rate across types and times.
    pub fn data_rate_max(&self) -> f64 {
        self.types
            .iter()
            .map(|t| t.data_rate.max_over_horizon())
            .fold(0.0, f64::max)
    }
}

/// Largest-remainder rounding of `n * proportions` to integers summing to n.
pub fn largest_remainder_counts(proportions: &[f64], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = proportions.iter().map(|&l| l * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|&r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for i in 0..n.saturating_sub(assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Truncated-Gaussian initial profiles with distinct centers
/// q_max * k / (K + 1) and std 0.1 * q_max, trapezoid-normalized.
pub fn default_initial_profiles(k: usize, grid: &Grid) -> Vec<Array1<f64>> {
    let std = 0.1 * grid.q_max;
    (1..=k)
        .map(|idx| {
            let center = grid.q_max * idx as f64 / (k + 1) as f64;
            gaussian_profile(grid, center, std)
        })
        .collect()
}

/// Trapezoid-normalized Gaussian bump truncated to [0, q_max].
pub fn gaussian_profile(grid: &Grid, center: f64, std: f64) -> Array1<f64> {
    let mut v = Array1::from_iter((0..grid.n_q).map(|i| {
        let z = (grid.coord(i) - center) / std;
        (-0.5 * z * z).exp()
    }));
    let mass = grid.trapezoid(v.view());
    v.mapv_inplace(|x| x / mass);
    v
}
