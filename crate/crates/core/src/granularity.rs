//! Type-count selection: the reduced error model, its closed-form minimizer,
//! corrections for unbalanced fleets and time-varying backhaul, and the
//! adaptive selection procedure built from them.
//!
//! The reduced error at fleet size N and (real-valued) type count K is
//!
//! ```text
//! E(N, K) = C1 * K^-beta + C2 * (K/N)^alpha + C3 * sqrt(delta_init)
//! ```
//!
//! whose unique minimizer over K > 0 is
//! K*(N) = (beta*C1 / (alpha*C2))^(1/(alpha+beta)) * N^(alpha/(alpha+beta)).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leo::LeoConfig;

/// Constants of the error model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModelParams {
    /// Discretization constant C1 > 0.
    pub c1: f64,
    /// Sampling constant C2 > 0.
    pub c2: f64,
    /// Initial-mismatch constant C3 >= 0.
    pub c3: f64,
    /// Sampling exponent alpha in (0, 1].
    pub alpha: f64,
    /// Hoelder exponent beta > 0.
    pub beta_exp: f64,
    /// Initial mismatch delta_{N,K} >= 0.
    pub delta_init: f64,
}

impl Default for ErrorModelParams {
    fn default() -> Self {
        Self {
            c1: 0.4886,
            c2: 2.0,
            c3: 0.0,
            alpha: 0.5,
            beta_exp: 1.0,
            delta_init: 0.0,
        }
    }
}

impl ErrorModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0) || !(self.c2 > 0.0) {
            return Err(Error::Config("c1 and c2 must be positive".into()));
        }
        if self.c3 < 0.0 || self.delta_init < 0.0 {
            return Err(Error::Config("c3 and delta_init must be nonnegative".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0,1], got {}", self.alpha)));
        }
        if !(self.beta_exp > 0.0) {
            return Err(Error::Config("beta_exp must be positive".into()));
        }
        Ok(())
    }

    /// Exponent gamma = alpha / (alpha + beta) of the K*(N) power law.
    pub fn gamma(&self) -> f64 {
        self.alpha / (self.alpha + self.beta_exp)
    }
}

/// Output of the adaptive type-count selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GranularityResult {
    /// Continuous minimizer of the reduced error.
    pub k_continuous: f64,
    /// Rounded and clamped integer type count.
    pub k_star: usize,
    /// Effective population after the unbalanced-fleet correction.
    pub n_effective: f64,
    /// Additive backhaul-variation term entering C1.
    pub delta_leo: f64,
    /// C1 + delta_leo actually used in the minimizer.
    pub c1_effective: f64,
    /// Scaling exponent alpha / (alpha + beta).
    pub gamma: f64,
}

/// Reduced approximation error E(n, k); accepts real-valued k > 0.
pub fn reduced_error(n: f64, k: f64, p: &ErrorModelParams) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::Domain(format!("type count must be positive, got {k}")));
    }
    if !(n >= 1.0) {
        return Err(Error::Domain(format!("population must be >= 1, got {n}")));
    }
    Ok(p.c1 * k.powf(-p.beta_exp) + p.c2 * (k / n).powf(p.alpha) + p.c3 * p.delta_init.sqrt())
}

/// Closed-form continuous minimizer of [`reduced_error`] over k > 0.
pub fn continuous_kstar(n: f64, p: &ErrorModelParams) -> f64 {
    let prefactor = (p.beta_exp * p.c1 / (p.alpha * p.c2)).powf(1.0 / (p.alpha + p.beta_exp));
    prefactor * n.powf(p.gamma())
}

/// Minimum achievable reduced error E(n, K*(n)).
///
/// Both terms of the reduced error share the exponent at the minimizer, so
/// the minimum is exactly proportional to n^(-alpha*beta/(alpha+beta)).
pub fn min_error(n: f64, p: &ErrorModelParams) -> Result<f64> {
    reduced_error(n, continuous_kstar(n, p), p)
}

/// Minimum error on the epsilon-Nash magnitude scale: the square root of
/// the reduced error, decaying as n^(-alpha*beta/(2(alpha+beta))) -- i.e.
/// n^(-1/6) for the 1D exponents. Scaling-law tables report this scale.
pub fn min_error_nash_scale(n: f64, p: &ErrorModelParams) -> Result<f64> {
    Ok(min_error(n, p)?.sqrt())
}

/// Sampling exponent alpha(d) and scaling exponent gamma(d) for a
/// d-dimensional state space with Lipschitz type dependence (beta = 1).
pub fn dimension_exponents(d: usize) -> Result<(f64, f64)> {
    if d < 1 {
        return Err(Error::Domain("dimension must be >= 1".into()));
    }
    let alpha = if d == 1 { 0.5 } else { 1.0 / (d as f64 + 2.0) };
    Ok((alpha, alpha / (alpha + 1.0)))
}

/// Continuous K* when the discretization constant is proportional to the
/// continuum heterogeneity: C1 = c1_bar * h_infinity. Returns zero for a
/// homogeneous fleet (h_infinity = 0).
pub fn kstar_heterogeneity_adjusted(
    n: f64,
    h_infinity: f64,
    c1_bar: f64,
    p: &ErrorModelParams,
) -> f64 {
    if h_infinity == 0.0 {
        return 0.0;
    }
    let adjusted = ErrorModelParams {
        c1: c1_bar * h_infinity,
        ..*p
    };
    continuous_kstar(n, &adjusted)
}

/// Continuous K* for an unbalanced fleet, with the sample term governed by
/// the smallest class: K*(lambda_min * n).
pub fn kstar_unbalanced(n: f64, lambda_min: f64, p: &ErrorModelParams) -> Result<f64> {
    if !(lambda_min > 0.0 && lambda_min <= 1.0) {
        return Err(Error::Domain(format!(
            "lambda_min must lie in (0, 1], got {lambda_min}"
        )));
    }
    Ok(continuous_kstar(lambda_min * n, p))
}

/// Topology-variation error term delta_LEO = c_leo * delta_phi *
/// sqrt(horizon / delta_tau).
pub fn leo_delta(delta_phi: f64, horizon_t: f64, delta_tau: f64, c_leo: f64) -> Result<f64> {
    if !(delta_tau > 0.0) {
        return Err(Error::Domain(format!("delta_tau must be positive, got {delta_tau}")));
    }
    Ok(c_leo * delta_phi * (horizon_t / delta_tau).sqrt())
}

/// Adaptive type-count selection: unbalanced-population correction, backhaul
/// inflation of C1, closed-form minimizer, round-half-up and clamping to
/// [2, floor(sqrt(n))].
pub fn select_type_count(
    n: usize,
    proportions: &[f64],
    p: &ErrorModelParams,
    leo: &LeoConfig,
    horizon_t: f64,
) -> Result<GranularityResult> {
    if proportions.is_empty() {
        return Err(Error::Config("proportions must be nonempty".into()));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || proportions.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Config("proportions must be a positive simplex".into()));
    }
    p.validate()?;

    let k_comp = proportions.len() as f64;
    let lambda_min = proportions.iter().cloned().fold(f64::INFINITY, f64::min);
    let n_effective = if lambda_min < 1.0 / k_comp {
        lambda_min * n as f64
    } else {
        n as f64
    };

    let delta_leo = leo_delta(leo.delta_phi_bound, horizon_t, leo.delta_tau, leo.c_leo)?;
    let c1_effective = p.c1 + delta_leo;
    let adjusted = ErrorModelParams {
        c1: c1_effective,
        ..*p
    };
    let k_continuous = continuous_kstar(n_effective, &adjusted);

    let sqrt_floor = (n as f64).sqrt().floor() as usize;
    let k_star = if sqrt_floor >= 2 {
        let rounded = (k_continuous + 0.5).floor() as usize;
        rounded.max(2).min(sqrt_floor)
    } else {
        sqrt_floor.max(1)
    };

    Ok(GranularityResult {
        k_continuous,
        k_star,
        n_effective,
        delta_leo,
        c1_effective,
        gamma: p.gamma(),
    })
}

/// Integer argmin of the reduced error over `k_range`, ties broken toward
/// the smaller count.
pub fn exhaustive_kstar(
    n: f64,
    k_range: impl IntoIterator<Item = usize>,
    p: &ErrorModelParams,
) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for k in k_range {
        let e = reduced_error(n, k as f64, p)?;
        best = match best {
            Some((bk, be)) if be <= e => Some((bk, be)),
            _ => Some((k, e)),
        };
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::Precondition("empty k range".into()))
}

/// Ordinary least squares on (ln x, ln y): returns slope, intercept, and the
/// standard error of the slope.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 3 {
        return Err(Error::Domain("log-log fit needs at least 3 points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Domain("log-log fit needs positive coordinates".into()));
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let xbar = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = logs
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let stderr = if points.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, intercept, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::leo::LeoConfig;
    use approx::assert_relative_eq;

    const TABLE_HORIZON: f64 = 0.06;

    #[test]
    fn reduced_error_paper_values() {
        let p = ErrorModelParams::default();
        assert!((reduced_error(1000.0, 6.0, &p).unwrap() - 0.2363).abs() < 5e-4);
        assert!((reduced_error(200.0, 1.0, &p).unwrap() - 0.6300).abs() < 5e-4);
        assert!((reduced_error(10000.0, 13.0, &p).unwrap() - 0.1097).abs() < 5e-4);
    }

    #[test]
    fn reduced_error_single_term() {
        let p = ErrorModelParams {
            c1: 0.0,
            c3: 0.0,
            ..Default::default()
        };
        // Degenerate c1 = 0 is outside validate() but fine for the formula.
        let e = p.c2 * (5.0f64 / 437.0).powf(p.alpha);
        assert_relative_eq!(reduced_error(437.0, 5.0, &p).unwrap(), e, epsilon = 1e-15);
    }

    #[test]
    fn reduced_error_rejects_nonpositive_k() {
        let p = ErrorModelParams::default();
        assert!(reduced_error(100.0, 0.0, &p).is_err());
        assert!(reduced_error(100.0, -2.0, &p).is_err());
    }

    #[test]
    fn continuous_kstar_paper_values() {
        let p = ErrorModelParams::default();
        assert!((continuous_kstar(1000.0, &p) - 6.20).abs() < 0.01);
        assert!((continuous_kstar(10000.0, &p) - 13.36).abs() < 0.01);
        assert!((continuous_kstar(200.0, &p) - 3.63).abs() < 0.01);
    }

    #[test]
    fn continuous_kstar_unit_prefactor() {
        let p = ErrorModelParams {
            c1: 0.5 * 2.0 / 1.0, // alpha * c2 / beta
            ..Default::default()
        };
        for n in [10.0, 100.0, 12345.0] {
            assert_relative_eq!(continuous_kstar(n, &p), n.powf(p.gamma()), epsilon = 1e-12);
        }
    }

    #[test]
    fn min_error_paper_values() {
        let p = ErrorModelParams::default();
        assert!((min_error(1000.0, &p).unwrap() - 0.2363).abs() < 5e-4);
        assert!((min_error(200.0, &p).unwrap() - 0.4040).abs() < 5e-4);
        assert!((min_error(10000.0, &p).unwrap() - 0.1097).abs() < 5e-4);
    }

    #[test]
    fn min_error_slopes_are_exact_power_laws() {
        let p = ErrorModelParams::default();
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let n = 10f64.powf(2.0 + 3.0 * i as f64 / 29.0);
                (n, min_error(n, &p).unwrap())
            })
            .collect();
        // The reduced error itself decays as n^(-1/3)...
        let (slope, _, stderr) = fit_loglog_slope(&pts).unwrap();
        assert!((slope - (-1.0 / 3.0)).abs() < 1e-6, "slope = {slope}");
        assert!(stderr < 1e-9);
        // ...and the epsilon-Nash-scale error as n^(-1/6), exactly.
        let pts: Vec<(f64, f64)> = pts.iter().map(|&(n, e)| (n, e.sqrt())).collect();
        let (slope, _, stderr) = fit_loglog_slope(&pts).unwrap();
        assert!((slope - (-1.0 / 6.0)).abs() < 1e-6, "slope = {slope}");
        assert!(stderr < 1e-9);
    }

    #[test]
    fn dimension_exponents_table() {
        assert_eq!(dimension_exponents(1).unwrap(), (0.5, 0.5 / 1.5));
        assert_eq!(dimension_exponents(2).unwrap(), (0.25, 0.2));
        let (a3, g3) = dimension_exponents(3).unwrap();
        assert_relative_eq!(a3, 0.2, epsilon = 1e-15);
        assert_relative_eq!(g3, 1.0 / 6.0, epsilon = 1e-15);
        assert!(dimension_exponents(0).is_err());
    }

    #[test]
    fn heterogeneity_adjusted_kstar() {
        let p = ErrorModelParams::default();
        assert_eq!(kstar_heterogeneity_adjusted(1000.0, 0.0, 1.0, &p), 0.0);
        // c1_bar * h = c1 reproduces the baseline.
        assert_relative_eq!(
            kstar_heterogeneity_adjusted(1000.0, 0.4886, 1.0, &p),
            continuous_kstar(1000.0, &p),
            epsilon = 1e-12
        );
        // Doubling h multiplies K* by 2^(1/(alpha+beta)) = 2^(2/3).
        let k1 = kstar_heterogeneity_adjusted(1000.0, 1.0, 0.3, &p);
        let k2 = kstar_heterogeneity_adjusted(1000.0, 2.0, 0.3, &p);
        assert_relative_eq!(k2 / k1, 2f64.powf(2.0 / 3.0), epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_kstar_prefactor() {
        let p = ErrorModelParams::default();
        assert_relative_eq!(
            kstar_unbalanced(777.0, 1.0, &p).unwrap(),
            continuous_kstar(777.0, &p),
            epsilon = 1e-13
        );
        let ratio = kstar_unbalanced(1000.0, 0.1, &p).unwrap() / continuous_kstar(1000.0, &p);
        assert!((ratio - 0.46416).abs() < 1e-4, "ratio = {ratio}");
        let k = kstar_unbalanced(1000.0, 0.1, &p).unwrap();
        assert!((k - 2.881).abs() < 5e-3, "k = {k}");
        assert!(kstar_unbalanced(10.0, 0.0, &p).is_err());
        assert!(kstar_unbalanced(10.0, 1.5, &p).is_err());
    }

    #[test]
    fn leo_delta_properties() {
        assert_eq!(leo_delta(0.0, 0.06, 60.0, 13.9).unwrap(), 0.0);
        let d1 = leo_delta(0.01, 0.06, 60.0, 13.9).unwrap();
        let d2 = leo_delta(0.02, 0.06, 60.0, 13.9).unwrap();
        assert_relative_eq!(d2, 2.0 * d1, epsilon = 1e-14);
        assert!(leo_delta(0.01, 0.06, 0.0, 13.9).is_err());
        // Default calibration: Fast dynamics yields 0.022 at the reference horizon.
        let cfg = LeoConfig::fast();
        let d = leo_delta(cfg.delta_phi_bound, TABLE_HORIZON, cfg.delta_tau, cfg.c_leo).unwrap();
        assert!((d - 0.022).abs() < 1e-9, "delta = {d}");
    }

    #[test]
    fn select_type_count_balanced_1000() {
        let p = ErrorModelParams::default();
        let r = select_type_count(1000, &[1.0 / 3.0; 3], &p, &LeoConfig::static_topology(), TABLE_HORIZON)
            .unwrap();
        assert_eq!(r.k_star, 6);
        assert!((r.k_continuous - 6.20).abs() < 0.01);
        assert_eq!(r.n_effective, 1000.0);
        assert_eq!(r.delta_leo, 0.0);
    }

    #[test]
    fn select_type_count_fast_leo_at_1e4() {
        let p = ErrorModelParams::default();
        let stat = select_type_count(10_000, &[0.25; 4], &p, &LeoConfig::static_topology(), TABLE_HORIZON)
            .unwrap();
        let fast =
            select_type_count(10_000, &[0.25; 4], &p, &LeoConfig::fast(), TABLE_HORIZON).unwrap();
        assert_eq!(stat.k_star, 13);
        assert_eq!(fast.k_star, 14);
        assert!((fast.delta_leo - 0.022).abs() < 1e-9);
    }

    #[test]
    fn select_type_count_upper_clamp() {
        let p = ErrorModelParams::default();
        let r = select_type_count(4, &[0.5, 0.5], &p, &LeoConfig::static_topology(), TABLE_HORIZON)
            .unwrap();
        assert_eq!(r.k_star, 2); // floor(sqrt(4)) = 2
        let r = select_type_count(3, &[0.5, 0.5], &p, &LeoConfig::static_topology(), TABLE_HORIZON)
            .unwrap();
        assert_eq!(r.k_star, 1); // floor(sqrt(3)) = 1 < 2
    }

    #[test]
    fn select_type_count_unbalanced_effective_population() {
        let p = ErrorModelParams::default();
        let r = select_type_count(
            1000,
            &[0.7, 0.2, 0.1],
            &p,
            &LeoConfig::static_topology(),
            TABLE_HORIZON,
        )
        .unwrap();
        assert_eq!(r.n_effective, 100.0);
        assert_relative_eq!(r.k_continuous, continuous_kstar(100.0, &p), epsilon = 1e-12);
    }

    #[test]
    fn select_type_count_rejects_bad_simplex() {
        let p = ErrorModelParams::default();
        let leo = LeoConfig::static_topology();
        assert!(select_type_count(100, &[], &p, &leo, TABLE_HORIZON).is_err());
        assert!(select_type_count(100, &[0.5, 0.4], &p, &leo, TABLE_HORIZON).is_err());
    }

    #[test]
    fn exhaustive_kstar_values() {
        let p = ErrorModelParams::default();
        assert_eq!(exhaustive_kstar(1000.0, 1..=20, &p).unwrap(), 6);
        // E(200,4) = 0.4050 < E(200,3) = 0.4078.
        assert_eq!(exhaustive_kstar(200.0, 1..=20, &p).unwrap(), 4);
        assert_eq!(exhaustive_kstar(1000.0, [7], &p).unwrap(), 7);
    }

    #[test]
    fn loglog_fit_exact_power_laws() {
        let pts: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 2.0 * (i as f64).sqrt())).collect();
        let (slope, intercept, stderr) = fit_loglog_slope(&pts).unwrap();
        assert_relative_eq!(slope, 0.5, epsilon = 1e-12);
        assert_relative_eq!(intercept, 2f64.ln(), epsilon = 1e-12);
        assert!(stderr < 1e-12);

        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let x = 10f64.powf(i as f64 / 5.0 + 0.3);
                (x, 3.7 * x.powf(1.0 / 3.0))
            })
            .collect();
        let (slope, _, _) = fit_loglog_slope(&pts).unwrap();
        assert_relative_eq!(slope, 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn loglog_fit_rejects_bad_input() {
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_loglog_slope(&[(1.0, 1.0), (2.0, 2.0), (-1.0, 3.0)]).is_err());
    }

    #[test]
    fn rounded_kstar_slope_in_band() {
        let p = ErrorModelParams::default();
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let n = 10f64.powf(2.0 + 3.0 * i as f64 / 19.0);
                let k = (continuous_kstar(n, &p) + 0.5).floor();
                (n, k)
            })
            .collect();
        let (slope, _, _) = fit_loglog_slope(&pts).unwrap();
        assert!((0.30..=0.37).contains(&slope), "slope = {slope}");
    }

    #[test]
    fn unique_minimum_certificate() {
        let p = ErrorModelParams::default();
        for n in [100.0, 1000.0, 31623.0, 100000.0] {
            let k = continuous_kstar(n, &p);
            let e = reduced_error(n, k, &p).unwrap();
            for eps in [0.01, 0.1, 1.0] {
                assert!(reduced_error(n, k + eps, &p).unwrap() > e);
                if k - eps > 0.0 {
                    assert!(reduced_error(n, k - eps, &p).unwrap() > e);
                }
            }
        }
    }

    #[test]
    fn first_order_condition_at_kstar() {
        let p = ErrorModelParams::default();
        for n in [100.0, 1000.0, 100000.0] {
            let k = continuous_kstar(n, &p);
            let h = 1e-6 * k;
            let dplus = reduced_error(n, k + h, &p).unwrap();
            let dminus = reduced_error(n, k - h, &p).unwrap();
            let deriv = (dplus - dminus) / (2.0 * h);
            let scale = reduced_error(n, k, &p).unwrap() / k;
            assert!(
                (deriv / scale).abs() <= 1e-8,
                "relative first-order defect {} at n = {n}",
                (deriv / scale).abs()
            );
        }
    }

    #[test]
    fn rounding_near_optimality() {
        let p = ErrorModelParams::default();
        for i in 0..40 {
            let n = 10f64.powf(2.0 + 3.0 * i as f64 / 39.0);
            let k = continuous_kstar(n, &p);
            let rounded = (k + 0.5).floor().max(1.0);
            let ratio = reduced_error(n, rounded, &p).unwrap() / reduced_error(n, k, &p).unwrap();
            assert!(ratio <= 1.01, "ratio {ratio} at n = {n}");
        }
    }

    #[test]
    fn qiao_term_dominance() {
        // K^2/N^3 <= (K/N)^(1/2) for all integer K <= sqrt(N), N in [1e2, 1e5].
        for n in 100..=100_000usize {
            let nf = n as f64;
            let kmax = nf.sqrt().floor() as usize;
            // The ratio (K^2/N^3) / (K/N)^(1/2) = K^(3/2) / N^(5/2) is
            // monotone in K, so checking K = kmax covers all smaller K.
            let k = kmax as f64;
            assert!(k * k / nf.powi(3) <= (k / nf).sqrt());
        }
    }

    #[test]
    fn kstar_monotonicity() {
        let p = ErrorModelParams::default();
        assert!(continuous_kstar(2000.0, &p) > continuous_kstar(1000.0, &p));
        let bigger_c1 = ErrorModelParams {
            c1: p.c1 * 1.5,
            ..p
        };
        assert!(continuous_kstar(1000.0, &bigger_c1) > continuous_kstar(1000.0, &p));
        assert!(
            kstar_heterogeneity_adjusted(1000.0, 2.0, 1.0, &p)
                > kstar_heterogeneity_adjusted(1000.0, 1.0, 1.0, &p)
        );
    }
}
