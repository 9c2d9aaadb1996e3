//! Discrete operators of the coupled system: the explicit conservative FPK
//! step, the preconditioned dual (potential) update with its space-time
//! Poisson solver, and the HJB residual used as the convergence monitor.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::grid::{ChannelParams, Density, DualPotential, Grid, TypeParams};
use crate::solver::physics::{
    d2_dq2, d_dq_centered, optimal_power_with_gain, rate_data_units, running_cost,
};

/// CFL budget for the explicit FPK step.
pub const CFL_LIMIT: f64 = 0.9;

/// One explicit step of the conservative upwind-advection plus centered
/// diffusion scheme with zero-flux (reflecting) boundaries.
///
/// The scheme conserves the lumped mass `sum(rho) * dq` exactly (zero-flux
/// telescoping); the caller re-normalizes to the trapezoid convention.
/// `drift` holds the node values of the drift Gamma(q).
pub fn fpk_step(
    density_slice: ArrayView1<f64>,
    drift: ArrayView1<f64>,
    sigma: f64,
    grid: &Grid,
) -> Result<Array1<f64>> {
    let n = grid.n_q;
    if density_slice.len() != n || drift.len() != n {
        return Err(Error::Precondition("fpk_step inputs must match the grid".into()));
    }
    let max_drift = drift.iter().fold(0.0f64, |a, &g| a.max(g.abs()));
    let advection = max_drift * grid.dt / grid.dq;
    let diffusion = sigma * sigma * grid.dt / (grid.dq * grid.dq);
    let total = advection + diffusion;
    if total > CFL_LIMIT {
        return Err(Error::CflViolation {
            advection,
            diffusion,
            total,
            limit: CFL_LIMIT,
        });
    }

    let half_sigma2 = 0.5 * sigma * sigma;
    // Face fluxes F_{i+1/2}, i = 0..n-2; boundary faces carry no flux.
    let mut flux = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let v = 0.5 * (drift[i] + drift[i + 1]);
        let upwind = if v >= 0.0 {
            v * density_slice[i]
        } else {
            v * density_slice[i + 1]
        };
        let diffusive = -half_sigma2 * (density_slice[i + 1] - density_slice[i]) / grid.dq;
        flux[i] = upwind + diffusive;
    }
    let mut next = Array1::zeros(n);
    for i in 0..n {
        let f_right = if i < n - 1 { flux[i] } else { 0.0 };
        let f_left = if i > 0 { flux[i - 1] } else { 0.0 };
        next[i] = density_slice[i] - grid.dt / grid.dq * (f_right - f_left);
    }
    Ok(next)
}

// ---------------------------------------------------------------------------
// Space-time Poisson preconditioner
// ---------------------------------------------------------------------------

/// Direct spectral solver for the weighted Neumann Poisson problem
/// `(-w_q d_qq - w_t d_tt) u = rhs` on the space-time grid.
///
/// Both axes are diagonalized by orthonormal DCT-II bases; the constant
/// nullspace is fixed by the zero-mean gauge. The state weight puts the
/// advective and temporal symbols of the continuity operator on a common
/// scale, which is what makes the unit step-size product the stability
/// reference.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    basis_q: Array2<f64>,
    basis_t: Array2<f64>,
    eig_q: Vec<f64>,
    eig_t: Vec<f64>,
}

fn dct2_basis(n: usize) -> Array2<f64> {
    let mut b = Array2::zeros((n, n));
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        for i in 0..n {
            b[(i, k)] = scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos();
        }
    }
    b
}

fn neumann_eigenvalues(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let s = (std::f64::consts::PI * k as f64 / (2.0 * n as f64)).sin();
            4.0 * s * s / (h * h)
        })
        .collect()
}

impl PoissonSolver {
    pub fn new(grid: &Grid, weight_q: f64, weight_t: f64) -> Self {
        let n_q = grid.n_q;
        let n_s = grid.n_slices();
        Self {
            basis_q: dct2_basis(n_q),
            basis_t: dct2_basis(n_s),
            eig_q: neumann_eigenvalues(n_q, grid.dq)
                .into_iter()
                .map(|l| l * weight_q)
                .collect(),
            eig_t: neumann_eigenvalues(n_s, grid.dt)
                .into_iter()
                .map(|l| l * weight_t)
                .collect(),
        }
    }

    /// Mean-zero solution of the weighted Poisson problem.
    pub fn solve(&self, rhs: &Array2<f64>) -> Array2<f64> {
        let coeffs = self.basis_q.t().dot(rhs).dot(&self.basis_t);
        let mut scaled = coeffs;
        for k in 0..scaled.nrows() {
            for l in 0..scaled.ncols() {
                let lam = self.eig_q[k] + self.eig_t[l];
                scaled[(k, l)] = if lam > 0.0 { scaled[(k, l)] / lam } else { 0.0 };
            }
        }
        self.basis_q.dot(&scaled).dot(&self.basis_t.t())
    }

    /// Applies the forward weighted operator (for tests).
    pub fn apply(&self, u: &Array2<f64>) -> Array2<f64> {
        let coeffs = self.basis_q.t().dot(u).dot(&self.basis_t);
        let mut scaled = coeffs;
        for k in 0..scaled.nrows() {
            for l in 0..scaled.ncols() {
                scaled[(k, l)] *= self.eig_q[k] + self.eig_t[l];
            }
        }
        self.basis_q.dot(&scaled).dot(&self.basis_t.t())
    }
}

/// Continuity defect of overrelaxed fields, the Poisson right-hand side of
/// the dual ascent:
///
/// ```text
/// rhs = d_t rho_bar - d_q m_bar - (sigma^2/2) d_qq rho_bar
/// ```
///
/// `momentum_bar` is the overrelaxed momentum in the offloading-flux sign
/// convention (positive when the queue drains), which makes `rhs` the
/// forward FPK residual of the drift-convention fields.
pub fn continuity_defect(
    density_bar: &Array2<f64>,
    momentum_bar: &Array2<f64>,
    sigma: f64,
    grid: &Grid,
) -> Array2<f64> {
    let n_q = grid.n_q;
    let n_s = grid.n_slices();
    let mut rhs = Array2::zeros((n_q, n_s));
    let mut dm = vec![0.0; n_q];
    let mut d2rho = vec![0.0; n_q];
    let half = |s: f64| 0.5 * s * s;
    for j in 0..n_s {
        d_dq_centered(momentum_bar.column(j), grid.dq, &mut dm);
        d2_dq2(density_bar.column(j), grid.dq, &mut d2rho);
        for i in 0..n_q {
            let dt_rho = if j < n_s - 1 {
                (density_bar[(i, j + 1)] - density_bar[(i, j)]) / grid.dt
            } else {
                (density_bar[(i, j)] - density_bar[(i, j - 1)]) / grid.dt
            };
            rhs[(i, j)] = dt_rho - dm[i] - half(sigma) * d2rho[i];
        }
    }
    rhs
}

/// Preconditioned dual ascent: adds `varsigma * (-Delta)^{-1} rhs` to the
/// potential, with `rhs` the continuity defect of the overrelaxed fields.
pub fn dual_update(
    potential: &DualPotential,
    density_bar: &Array2<f64>,
    momentum_bar: &Array2<f64>,
    varsigma: f64,
    sigma: f64,
    grid: &Grid,
    poisson: &PoissonSolver,
) -> DualPotential {
    if varsigma == 0.0 {
        return potential.clone();
    }
    let rhs = continuity_defect(density_bar, momentum_bar, sigma, grid);
    let correction = poisson.solve(&rhs);
    DualPotential {
        values: &potential.values + &(correction * varsigma),
    }
}

// ---------------------------------------------------------------------------
// HJB residual
// ---------------------------------------------------------------------------

/// Frozen coupling fields entering the Hamiltonian: price and interference
/// per time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTrace {
    pub price: Vec<f64>,
    pub interference: Vec<f64>,
}

impl CouplingTrace {
    pub fn uncoupled(grid: &Grid, kappa: f64) -> Self {
        Self {
            price: vec![kappa; grid.n_slices()],
            interference: vec![0.0; grid.n_slices()],
        }
    }
}

/// Per-slice fields derived from a value-convention potential under frozen
/// coupling, together with the pointwise HJB defect.
pub struct PotentialEval {
    pub policy: Array2<f64>,
    pub rate: Array2<f64>,
    pub drift: Array2<f64>,
    pub cost: Array2<f64>,
    /// HJB defect r_ij for j < n_t (zero on the pinned terminal slice).
    pub residual_field: Array2<f64>,
}

impl PotentialEval {
    /// Discrete L2 norm sqrt(sum r^2 dq dt) of the defect.
    pub fn residual_norm(&self, grid: &Grid) -> f64 {
        let acc: f64 = self.residual_field.iter().map(|r| r * r).sum();
        (acc * grid.dq * grid.dt).sqrt()
    }
}

/// Evaluates policy, rate, drift, running cost and the HJB defect of a
/// value-convention potential under frozen coupling.
///
/// The defect is
///
/// ```text
/// r_ij = -(phi_{i,j+1} - phi_ij)/dt + H(q_i, dphi_ij/dq) - (sigma^2/2) d_qq phi_ij
/// ```
///
/// with backward time differences, centered state differences, and the
/// maximized Hamiltonian `H = -(running cost) - Gamma * dphi/dq` at the
/// pointwise optimal power. The terminal slice `phi(., T) = C q^2` is held
/// exactly by the caller and carries no defect row.
pub fn evaluate_potential(
    potential: &Array2<f64>,
    coupling: &CouplingTrace,
    params: &TypeParams,
    grid: &Grid,
    channel: &ChannelParams,
) -> PotentialEval {
    let n_q = grid.n_q;
    let n_s = grid.n_slices();
    let mut policy = Array2::zeros((n_q, n_s));
    let mut rate = Array2::zeros((n_q, n_s));
    let mut drift = Array2::zeros((n_q, n_s));
    let mut cost = Array2::zeros((n_q, n_s));
    let mut residual_field = Array2::zeros((n_q, n_s));
    let mut dphi = vec![0.0; n_q];
    let mut d2phi = vec![0.0; n_q];
    let half_sigma2 = 0.5 * params.sigma * params.sigma;
    for j in 0..n_s {
        d_dq_centered(potential.column(j), grid.dq, &mut dphi);
        d2_dq2(potential.column(j), grid.dq, &mut d2phi);
        let price = coupling.price[j];
        let g_eff = channel.solver_gain() / (channel.noise + coupling.interference[j]);
        let d_rate = params.data_rate.at(grid.time(j), grid.horizon_t);
        for i in 0..n_q {
            let p_star = optimal_power_with_gain(dphi[i], price, params, channel, g_eff, channel.p_max);
            let r = rate_data_units(p_star, g_eff, channel);
            let c = running_cost(p_star, r, price, params);
            let gamma = d_rate - r;
            policy[(i, j)] = p_star;
            rate[(i, j)] = r;
            drift[(i, j)] = gamma;
            cost[(i, j)] = c;
            if j < n_s - 1 {
                let hamiltonian = -c - gamma * dphi[i];
                residual_field[(i, j)] = -(potential[(i, j + 1)] - potential[(i, j)]) / grid.dt
                    + hamiltonian
                    - half_sigma2 * d2phi[i];
            }
        }
    }
    PotentialEval {
        policy,
        rate,
        drift,
        cost,
        residual_field,
    }
}

/// Discrete L2 norm of the HJB defect of a value-convention potential.
pub fn hjb_residual(
    potential: &Array2<f64>,
    coupling: &CouplingTrace,
    params: &TypeParams,
    grid: &Grid,
    channel: &ChannelParams,
) -> f64 {
    evaluate_potential(potential, coupling, params, grid, channel).residual_norm(grid)
}

/// Inner fixed-point count of the cold-started implicit backward step.
pub const SWEEP_INNER_COLD: usize = 48;
/// Inner fixed-point count when warm-started from a previous potential.
pub const SWEEP_INNER_WARM: usize = 6;

/// Fully implicit backward value sweep: each time step solves the nonlinear
/// balance `-(phi_{j+1} - phi_j)/dt + H(dphi_j) - (sigma^2/2) d2 phi_j = 0`
/// by a fixed number of inner fixed-point iterations (Hamiltonian lagged,
/// diffusion solved implicitly), so the returned field zeroes the defect
/// stencils of [`evaluate_potential`] at the given coupling up to the inner
/// contraction error. The inner count is fixed rather than tolerance-driven
/// so the work per call does not depend on the field state; `warm` seeds
/// each step from a previous potential, which drives the inner error to
/// zero as the outer iteration converges.
pub fn implicit_value_sweep(
    coupling: &CouplingTrace,
    params: &TypeParams,
    grid: &Grid,
    channel: &ChannelParams,
    warm: Option<&Array2<f64>>,
) -> Array2<f64> {
    let n_q = grid.n_q;
    let n_s = grid.n_slices();
    let inner = if warm.is_some() {
        SWEEP_INNER_WARM
    } else {
        SWEEP_INNER_COLD
    };
    let mut phi = Array2::zeros((n_q, n_s));
    for i in 0..n_q {
        phi[(i, n_s - 1)] = params.terminal_c * grid.coord(i) * grid.coord(i);
    }
    let a = grid.dt * 0.5 * params.sigma * params.sigma;
    let mut dphi = vec![0.0; n_q];
    let mut rhs = vec![0.0; n_q];
    let mut cur: Vec<f64> = vec![0.0; n_q];
    for j in (0..n_s - 1).rev() {
        let price = coupling.price[j];
        let g_eff = channel.solver_gain() / (channel.noise + coupling.interference[j]);
        let d_rate = params.data_rate.at(grid.time(j), grid.horizon_t);
        for i in 0..n_q {
            cur[i] = match warm {
                Some(w) => w[(i, j)],
                None => phi[(i, j + 1)],
            };
        }
        for _ in 0..inner {
            d_dq_centered(ndarray::ArrayView1::from(&cur), grid.dq, &mut dphi);
            for i in 0..n_q {
                let p_star =
                    optimal_power_with_gain(dphi[i], price, params, channel, g_eff, channel.p_max);
                let rate = rate_data_units(p_star, g_eff, channel);
                let hamiltonian =
                    -running_cost(p_star, rate, price, params) - (d_rate - rate) * dphi[i];
                rhs[i] = phi[(i, j + 1)] - grid.dt * hamiltonian;
            }
            cur = solve_implicit_diffusion_tridiagonal(&rhs, a, grid.dq);
        }
        for i in 0..n_q {
            phi[(i, j)] = cur[i];
        }
    }
    phi
}

/// Solves (I - a*D2) x = b with the mirrored Neumann D2 (Thomas algorithm).
pub(crate) fn solve_implicit_diffusion_tridiagonal(b: &[f64], a: f64, dq: f64) -> Vec<f64> {
    let n = b.len();
    let r = a / (dq * dq);
    let mut diag = vec![1.0 + 2.0 * r; n];
    let mut upper = vec![-r; n - 1];
    let mut lower = vec![-r; n - 1];
    upper[0] = -2.0 * r;
    lower[n - 2] = -2.0 * r;
    let mut x = b.to_vec();
    for i in 1..n {
        let w = lower[i - 1] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        x[i] -= w * x[i - 1];
    }
    x[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (x[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Forward FPK rollout of an initial profile under a drift field; every
/// slice is renormalized to unit trapezoid mass.
pub fn fpk_rollout(
    initial: &Array1<f64>,
    drift: &Array2<f64>,
    sigma: f64,
    grid: &Grid,
) -> Result<Density> {
    let mut values = Array2::zeros((grid.n_q, grid.n_slices()));
    values.column_mut(0).assign(initial);
    for j in 0..grid.n_t {
        let next = fpk_step(values.column(j), drift.column(j), sigma, grid)?;
        values.column_mut(j + 1).assign(&next);
    }
    crate::grid::normalize_density(Density { values }, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, normalize_density, DataRateProfile};
    use approx::assert_relative_eq;

    fn params_with(sigma: f64, d: f64) -> TypeParams {
        TypeParams {
            theta: 0.0,
            beta1: 0.5,
            beta2: 1.0,
            terminal_c: 0.5,
            sigma,
            data_rate: DataRateProfile::Constant { rate: d },
        }
    }

    #[test]
    fn fpk_identity_without_dynamics() {
        let g = make_grid(20, 10, 10.0, 0.06).unwrap();
        let rho = Array1::from_elem(20, 0.1);
        let drift = Array1::zeros(20);
        let next = fpk_step(rho.view(), drift.view(), 0.0, &g).unwrap();
        assert_eq!(next, rho);
    }

    #[test]
    fn fpk_conserves_lumped_mass() {
        let g = make_grid(50, 60, 10.0, 0.06).unwrap();
        let mut rho = Array1::zeros(50);
        for i in 0..50 {
            rho[i] = (-(g.coord(i) - 5.0f64).powi(2)).exp();
        }
        let drift = Array1::from_elem(50, -80.0);
        let before: f64 = rho.sum();
        let next = fpk_step(rho.view(), drift.view(), 1.0, &g).unwrap();
        let after: f64 = next.sum();
        assert!((before - after).abs() * g.dq <= 1e-12);
    }

    #[test]
    fn fpk_diffusion_variance_growth() {
        // Pure diffusion: variance grows by sigma^2 dt per step away from
        // the boundaries.
        let g = make_grid(201, 40, 10.0, 0.004) .unwrap();
        let sigma = 1.5;
        let mut rho = Array1::zeros(201);
        rho[100] = 1.0 / g.dq;
        let drift = Array1::zeros(201);
        let moments = |r: &Array1<f64>| {
            let mass: f64 = (0..201).map(|i| g.weight(i) * r[i]).sum();
            let mean: f64 = (0..201).map(|i| g.weight(i) * g.coord(i) * r[i]).sum::<f64>() / mass;
            let var: f64 = (0..201)
                .map(|i| g.weight(i) * (g.coord(i) - mean).powi(2) * r[i])
                .sum::<f64>()
                / mass;
            (mass, var)
        };
        let (_, v0) = moments(&rho);
        let steps = 40;
        let mut cur = rho;
        for _ in 0..steps {
            cur = fpk_step(cur.view(), drift.view(), sigma, &g).unwrap();
        }
        let (mass, v1) = moments(&cur);
        assert!((mass - 1.0).abs() < 1e-10);
        let grown = v1 - v0;
        let expected = sigma * sigma * g.dt * steps as f64;
        assert!(
            (grown - expected).abs() < 0.05 * expected,
            "variance grew {grown}, expected {expected}"
        );
    }

    #[test]
    fn fpk_constant_drift_transports_mean() {
        let g = make_grid(201, 50, 10.0, 0.005) .unwrap();
        let c = 60.0;
        let mut rho = Array1::zeros(201);
        for i in 0..201 {
            rho[i] = (-(g.coord(i) - 3.0f64).powi(2) / 0.125).exp();
        }
        let mass = g.trapezoid(rho.view());
        rho.mapv_inplace(|v| v / mass);
        let mut cur = rho;
        let drift = Array1::from_elem(201, c);
        let mean = |r: &Array1<f64>| {
            let mass: f64 = (0..201).map(|i| g.weight(i) * r[i]).sum();
            (0..201).map(|i| g.weight(i) * g.coord(i) * r[i]).sum::<f64>() / mass
        };
        let m0 = mean(&cur);
        let steps = 20;
        for _ in 0..steps {
            cur = fpk_step(cur.view(), drift.view(), 0.0, &g).unwrap();
        }
        let m1 = mean(&cur);
        let expected = c * g.dt * steps as f64;
        assert!(
            ((m1 - m0) - expected).abs() < 1e-3 * expected + 5e-3,
            "mean moved {}, expected {expected}",
            m1 - m0
        );
    }

    #[test]
    fn fpk_cfl_violation_is_reported() {
        let g = make_grid(50, 60, 10.0, 0.06).unwrap();
        let rho = Array1::from_elem(50, 0.1);
        let drift = Array1::from_elem(50, 500.0);
        match fpk_step(rho.view(), drift.view(), 1.0, &g) {
            Err(Error::CflViolation { total, .. }) => assert!(total > CFL_LIMIT),
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn poisson_inverts_discrete_operator() {
        let g = make_grid(24, 18, 10.0, 0.06).unwrap();
        let solver = PoissonSolver::new(&g, 3.0, 1.0);
        // Build a mean-zero field, push it through the forward operator and
        // recover it.
        let mut u = Array2::zeros((24, 19));
        for i in 0..24 {
            for j in 0..19 {
                u[(i, j)] = (std::f64::consts::PI * 2.0 * (i as f64 + 0.5) / 24.0).cos()
                    * (std::f64::consts::PI * (j as f64 + 0.5) / 19.0).cos();
            }
        }
        let rhs = solver.apply(&u);
        let got = solver.solve(&rhs);
        let err = (&got - &u).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(err < 1e-11, "max error {err}");
    }

    #[test]
    fn poisson_matches_analytic_solution_second_order() {
        // -u'' = f with u = cos(pi q~), q~ the half-sample coordinate.
        let errs: Vec<f64> = [32usize, 64, 128]
            .iter()
            .map(|&n| {
                let g = make_grid(n, 2, 1.0, 1.0).unwrap();
                let solver = PoissonSolver::new(&g, 1.0, 0.0);
                let h = g.dq;
                let mut rhs = Array2::zeros((n, 3));
                let mut exact = Array2::zeros((n, 3));
                for i in 0..n {
                    let x = (i as f64 + 0.5) / n as f64 * (n as f64 * h);
                    let u = (std::f64::consts::PI * x / (n as f64 * h)).cos();
                    for j in 0..3 {
                        exact[(i, j)] = u;
                        rhs[(i, j)] = (std::f64::consts::PI / (n as f64 * h)).powi(2) * u;
                    }
                }
                let got = solver.solve(&rhs);
                (&got - &exact).iter().fold(0.0f64, |a, &v| a.max(v.abs()))
            })
            .collect();
        // Halving h should shrink the error by about four.
        assert!(errs[0] / errs[1] > 2.5, "ratios {errs:?}");
        assert!(errs[1] / errs[2] > 2.5, "ratios {errs:?}");
    }

    #[test]
    fn dual_update_zero_defect_is_identity() {
        let g = make_grid(16, 8, 10.0, 0.06).unwrap();
        let solver = PoissonSolver::new(&g, 1.0, 1.0);
        let phi = DualPotential {
            values: Array2::from_shape_fn((16, 9), |(i, j)| (i * j) as f64 * 0.01),
        };
        // Constant-in-time density with zero momentum and zero diffusion has
        // zero continuity defect.
        let rho = Array2::from_elem((16, 9), 0.1);
        let m = Array2::zeros((16, 9));
        let out = dual_update(&phi, &rho, &m, 0.7, 0.0, &g, &solver);
        let diff = (&out.values - &phi.values).iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        assert!(diff < 1e-12);
        // Zero step is exactly the identity regardless of the defect.
        let m2 = Array2::from_elem((16, 9), 1.0);
        let out2 = dual_update(&phi, &rho, &m2, 0.0, 1.0, &g, &solver);
        assert_eq!(out2.values, phi.values);
    }

    #[test]
    fn hjb_residual_heat_mode_refines_second_order() {
        // No control (p_max = 0), no generation: the residual reduces to the
        // backward heat defect. phi = exp(-a (T - t)) cos(pi q / Q) is exact
        // with a = sigma^2/2 (pi/Q)^2.
        let sigma = 2.0;
        let q_max = 10.0;
        let horizon = 0.06;
        let channel = ChannelParams {
            p_max: 0.0,
            ..ChannelParams::default()
        };
        let params = params_with(sigma, 0.0);
        let residual_at = |n_q: usize, n_t: usize| {
            let g = make_grid(n_q, n_t, q_max, horizon).unwrap();
            let a = 0.5 * sigma * sigma * (std::f64::consts::PI / q_max).powi(2);
            let phi = Array2::from_shape_fn((n_q, g.n_slices()), |(i, j)| {
                (-a * (horizon - g.time(j))).exp()
                    * (std::f64::consts::PI * g.coord(i) / q_max).cos()
            });
            hjb_residual(&phi, &CouplingTrace::uncoupled(&g, 0.1), &params, &g, &channel)
        };
        let coarse = residual_at(25, 30);
        let fine = residual_at(50, 60);
        assert!(coarse < 0.1, "coarse residual {coarse}");
        let ratio = coarse / fine;
        assert!(
            (1.5..=4.5).contains(&ratio),
            "refinement ratio {ratio} (coarse {coarse}, fine {fine})"
        );
    }

    #[test]
    fn hjb_residual_zero_for_constructed_solution() {
        // With p_max = 0 the Hamiltonian is linear; build phi to satisfy the
        // residual's own stencils exactly by a backward tridiagonal solve.
        let g = make_grid(30, 25, 10.0, 0.06).unwrap();
        let sigma = 1.2;
        let d_rate = 30.0;
        let channel = ChannelParams {
            p_max: 0.0,
            ..ChannelParams::default()
        };
        let params = params_with(sigma, d_rate);
        let n = g.n_q;
        let mut phi = Array2::zeros((n, g.n_slices()));
        for i in 0..n {
            phi[(i, g.n_t)] = params.terminal_c * g.coord(i) * g.coord(i);
        }
        // Residual row: -(phi_{j+1} - phi_j)/dt - D dphi_j - s2 d2 phi_j = 0
        //  => (I/dt - D*D1 - s2*D2) phi_j = phi_{j+1}/dt   (as operators on phi_j)
        let s2 = 0.5 * sigma * sigma;
        for j in (0..g.n_t).rev() {
            // Assemble the dense system (one-sided first rows).
            let mut a = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                a[(i, i)] += 1.0 / g.dt;
            }
            // - D * D1 (centered, one-sided at boundaries)
            let dq = g.dq;
            a[(0, 0)] -= d_rate * (-1.0 / dq);
            a[(0, 1)] -= d_rate * (1.0 / dq);
            for i in 1..n - 1 {
                a[(i, i - 1)] -= d_rate * (-1.0 / (2.0 * dq));
                a[(i, i + 1)] -= d_rate * (1.0 / (2.0 * dq));
            }
            a[(n - 1, n - 2)] -= d_rate * (-1.0 / dq);
            a[(n - 1, n - 1)] -= d_rate * (1.0 / dq);
            // - s2 * D2 (mirrored)
            let h2 = dq * dq;
            a[(0, 0)] -= s2 * (-2.0 / h2);
            a[(0, 1)] -= s2 * (2.0 / h2);
            for i in 1..n - 1 {
                a[(i, i - 1)] -= s2 * (1.0 / h2);
                a[(i, i)] -= s2 * (-2.0 / h2);
                a[(i, i + 1)] -= s2 * (1.0 / h2);
            }
            a[(n - 1, n - 2)] -= s2 * (2.0 / h2);
            a[(n - 1, n - 1)] -= s2 * (-2.0 / h2);
            let b: Vec<f64> = (0..n).map(|i| phi[(i, j + 1)] / g.dt).collect();
            let x = solve_dense(a, b);
            for i in 0..n {
                phi[(i, j)] = x[i];
            }
        }
        let res = hjb_residual(&phi, &CouplingTrace::uncoupled(&g, 0.1), &params, &g, &channel);
        assert!(res <= 1e-10, "residual {res}");
    }

    fn solve_dense(mut a: Array2<f64>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let mut piv = col;
            for r in col + 1..n {
                if a[(r, col)].abs() > a[(piv, col)].abs() {
                    piv = r;
                }
            }
            if piv != col {
                for c in 0..n {
                    let tmp = a[(col, c)];
                    a[(col, c)] = a[(piv, c)];
                    a[(piv, c)] = tmp;
                }
                b.swap(col, piv);
            }
            let d = a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] / d;
                for c in col..n {
                    a[(r, c)] -= f * a[(col, c)];
                }
                b[r] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in r + 1..n {
                acc -= a[(r, c)] * x[c];
            }
            x[r] = acc / a[(r, r)];
        }
        x
    }
}
