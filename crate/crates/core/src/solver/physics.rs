//! Pointwise physics of the control problem: SINR rate curve, mean-field
//! coupling aggregates, and the Hamiltonian power minimizer.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::grid::{ChannelParams, Density, Grid, TypeParams};

/// Shannon rate B * log2(1 + p g / (noise + interference)) in bit/s.
#[inline]
pub fn sinr_rate(p: f64, gain: f64, noise: f64, interference: f64, bandwidth: f64) -> f64 {
    debug_assert!(p >= 0.0 && noise > 0.0 && interference >= 0.0);
    bandwidth * (1.0 + p * gain / (noise + interference)).log2()
}

/// Rate in queue data units per second for effective gain
/// `g_eff = gain / (noise + interference)`.
#[inline]
pub fn rate_data_units(p: f64, g_eff: f64, channel: &ChannelParams) -> f64 {
    channel.to_data_units(channel.bandwidth_b * (1.0 + p * g_eff).log2())
}

/// Aggregate mean-field interference at one time slice:
/// sum_k N_k * int p_k(q,t) |h_k|^2 rho_k(q,t) dq + I_sat
/// with trapezoid quadrature.
pub fn mean_field_interference(
    densities: &[Density],
    policies: &[Array2<f64>],
    class_counts: &[usize],
    interference_gains: &[f64],
    i_sat: f64,
    grid: &Grid,
    time_index: usize,
) -> Result<f64> {
    let k = densities.len();
    if policies.len() != k || class_counts.len() != k || interference_gains.len() != k {
        return Err(Error::Precondition(
            "interference inputs must share the same type count".into(),
        ));
    }
    let mut total = i_sat;
    for t in 0..k {
        let rho = densities[t].slice(time_index);
        let p = policies[t].column(time_index);
        let mut integral = 0.0;
        for i in 0..grid.n_q {
            integral += grid.weight(i) * p[i] * rho[i];
        }
        total += class_counts[t] as f64 * interference_gains[t] * integral;
    }
    Ok(total)
}

/// Congestion-aware computational price at one time slice:
/// kappa + varrho * int R(q,t) rho_mix(q,t) dq + mu / B_sat,
/// with the congestion integral over the population-weighted mixture.
#[allow(clippy::too_many_arguments)]
pub fn computational_price(
    densities: &[Density],
    rate_fields: &[Array2<f64>],
    proportions: &[f64],
    bottleneck_mbps: f64,
    kappa: f64,
    varrho: f64,
    mu: f64,
    grid: &Grid,
    time_index: usize,
) -> Result<f64> {
    let k = densities.len();
    if rate_fields.len() != k || proportions.len() != k {
        return Err(Error::Precondition("price inputs must share the same type count".into()));
    }
    let mut congestion = 0.0;
    for t in 0..k {
        let rho = densities[t].slice(time_index);
        let r = rate_fields[t].column(time_index);
        let mut integral = 0.0;
        for i in 0..grid.n_q {
            integral += grid.weight(i) * r[i] * rho[i];
        }
        congestion += proportions[t] * integral;
    }
    Ok(kappa + varrho * congestion + mu / bottleneck_mbps)
}

/// Tolerance of the power minimizer as a fraction of P_max.
const POWER_TOL: f64 = 1e-10;

/// Minimizes the pointwise Hamiltonian integrand
/// `beta1 p^2 + beta2 Phi R(p) + dV/dq * (D - R(p))` over p in [0, P_max].
///
/// The objective is strictly convex; when `beta2 Phi - dV/dq >= 0` the
/// integrand is nondecreasing and the minimizer is zero. Otherwise the
/// stationarity equation `2 beta1 p + (beta2 Phi - dV/dq) R'(p) = 0` is
/// monotone and its root (clamped to the interval) is bracketed near the
/// closed-form candidate and polished by bisection to `1e-10 * P_max`.
pub fn optimal_power(
    dv_dq: f64,
    price: f64,
    params: &TypeParams,
    channel: &ChannelParams,
    interference: f64,
) -> f64 {
    let p_max = channel.p_max;
    let g_eff = channel.solver_gain() / (channel.noise + interference);
    optimal_power_with_gain(dv_dq, price, params, channel, g_eff, p_max)
}

pub(crate) fn optimal_power_with_gain(
    dv_dq: f64,
    price: f64,
    params: &TypeParams,
    channel: &ChannelParams,
    g_eff: f64,
    p_max: f64,
) -> f64 {
    if g_eff <= 0.0 || p_max <= 0.0 {
        return 0.0;
    }
    let s = params.beta2 * price - dv_dq;
    // R'(p) = c_r * g_eff / (1 + g_eff p), c_r = units_per_bit * B / ln 2.
    let c_r = channel.data_units_per_bit * channel.bandwidth_b / std::f64::consts::LN_2;
    let stationarity = |p: f64| 2.0 * params.beta1 * p + s * c_r * g_eff / (1.0 + g_eff * p);
    // Closed-form root of 2 b1 g p^2 + 2 b1 p + s c_r g = 0; evaluated on
    // every call so the work per grid point is branch-independent.
    let w = -s * c_r * g_eff;
    let candidate = ((1.0 + 2.0 * g_eff * w.max(0.0) / params.beta1).sqrt() - 1.0) / (2.0 * g_eff);
    let saturated = stationarity(p_max) <= 0.0;
    if s >= 0.0 {
        return 0.0;
    }
    if saturated {
        return p_max;
    }
    // Bisection polish of the monotone stationarity equation around the
    // closed-form candidate.
    let tol = POWER_TOL * p_max;
    let (mut lo, mut hi) = {
        let lo = (candidate - 16.0 * tol).max(0.0);
        let hi = (candidate + 16.0 * tol).min(p_max);
        if stationarity(lo) <= 0.0 && stationarity(hi) >= 0.0 {
            (lo, hi)
        } else {
            (0.0, p_max)
        }
    };
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if stationarity(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Running cost density beta1 p^2 + beta2 Phi R(p) at one point.
#[inline]
pub fn running_cost(p: f64, rate: f64, price: f64, params: &TypeParams) -> f64 {
    params.beta1 * p * p + params.beta2 * price * rate
}

/// Centered first state derivative, one-sided at the boundary nodes.
pub fn d_dq_centered(slice: ArrayView1<f64>, dq: f64, out: &mut [f64]) {
    let n = slice.len();
    out[0] = (slice[1] - slice[0]) / dq;
    for i in 1..n - 1 {
        out[i] = (slice[i + 1] - slice[i - 1]) / (2.0 * dq);
    }
    out[n - 1] = (slice[n - 1] - slice[n - 2]) / dq;
}

/// Centered second state derivative with mirrored (Neumann) boundary ghosts.
pub fn d2_dq2(slice: ArrayView1<f64>, dq: f64, out: &mut [f64]) {
    let n = slice.len();
    let h2 = dq * dq;
    out[0] = 2.0 * (slice[1] - slice[0]) / h2;
    for i in 1..n - 1 {
        out[i] = (slice[i + 1] - 2.0 * slice[i] + slice[i - 1]) / h2;
    }
    out[n - 1] = 2.0 * (slice[n - 2] - slice[n - 1]) / h2;
}
