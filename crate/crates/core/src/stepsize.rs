//! Heterogeneity-aware primal-dual step-size adaptation.
//!
//! The step product is shrunk below the classical bound according to how far
//! apart the per-type densities currently are:
//!
//! ```text
//! xi * varsigma = (1 - eps) / (1 + C_H * H_K)
//! C_H = L^2 T K (K-1) (phi_max^2 + delta_sat^2)
//! ```
//!
//! where H_K is the (time-averaged) pairwise-W2 heterogeneity of the current
//! iterates, phi_max the largest dual state-gradient sup-norm seen so far,
//! and delta_sat the backhaul transition correction. At H_K = 0 the rule
//! reduces to the fixed homogeneous product 1 - eps.

use crate::error::{Error, Result};
use crate::grid::{Density, Grid};
use crate::leo::{delta_sat, Snapshot};
use crate::transport::heterogeneity_measure_time_avg;

/// Everything the adaptation rule reads. The running maximum of dual
/// gradients is owned by the solver loop and passed in `dual_gradients`.
#[derive(Debug, Clone)]
pub struct StepSizeInputs<'a> {
    pub densities: &'a [Density],
    pub grid: &'a Grid,
    /// Per-type sup-norms of the dual state gradient.
    pub dual_gradients: &'a [f64],
    /// Model Lipschitz constant L.
    pub lipschitz_l: f64,
    pub horizon_t: f64,
    /// Safety margin eps in (0, 1).
    pub safety_margin: f64,
    pub prev_snapshot: &'a Snapshot,
    pub curr_snapshot: &'a Snapshot,
    /// Backhaul-cost coefficient.
    pub mu: f64,
}

/// Adapted primal/dual steps and their diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub xi: f64,
    pub varsigma: f64,
    /// xi * varsigma, strictly below the sufficient bound.
    pub product: f64,
    pub c_h: f64,
    pub h_k: f64,
}

/// Heterogeneity correction factor C_H = L^2 T K (K-1) phi_max^2.
pub fn compute_c_h(k_types: usize, lipschitz_l: f64, horizon_t: f64, phi_grad_max: f64) -> f64 {
    if k_types < 2 {
        return 0.0;
    }
    lipschitz_l * lipschitz_l
        * horizon_t
        * (k_types * (k_types - 1)) as f64
        * phi_grad_max
        * phi_grad_max
}

/// Computes the adaptive step sizes for the current iterates.
pub fn adapt_step(inputs: &StepSizeInputs<'_>) -> Result<StepSizes> {
    let k = inputs.densities.len();
    if k == 0 {
        return Err(Error::Precondition("at least one density required".into()));
    }
    if inputs.dual_gradients.len() != k {
        return Err(Error::Precondition(
            "dual gradient sup-norms must match the type count".into(),
        ));
    }
    if !(inputs.safety_margin > 0.0 && inputs.safety_margin < 1.0) {
        return Err(Error::Precondition(format!(
            "safety margin must lie in (0,1), got {}",
            inputs.safety_margin
        )));
    }
    if !(inputs.lipschitz_l > 0.0) {
        return Err(Error::Precondition("lipschitz_l must be positive".into()));
    }

    let h_k = heterogeneity_measure_time_avg(inputs.densities, inputs.grid)?;
    let phi_max = inputs.dual_gradients.iter().cloned().fold(0.0, f64::max);
    let mut c_h = compute_c_h(k, inputs.lipschitz_l, inputs.horizon_t, phi_max);
    let dsat = delta_sat(inputs.prev_snapshot, inputs.curr_snapshot, inputs.mu)?;
    if k >= 2 {
        c_h += inputs.lipschitz_l * inputs.lipschitz_l
            * inputs.horizon_t
            * (k * (k - 1)) as f64
            * dsat
            * dsat;
    }

    let product = (1.0 - inputs.safety_margin) / (1.0 + c_h * h_k);
    let xi = product.sqrt();
    Ok(StepSizes {
        xi,
        varsigma: xi,
        product,
        c_h,
        h_k,
    })
}

/// Sufficient stability criterion xi * varsigma < 1 / (1 + c_h * h_k).
pub fn check_sufficient_condition(xi: f64, varsigma: f64, c_h: f64, h_k: f64) -> bool {
    xi * varsigma < 1.0 / (1.0 + c_h * h_k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_profile, make_grid, Density};
    use approx::assert_relative_eq;

    fn snap(rate: f64) -> Snapshot {
        Snapshot {
            window_index: 0,
            link_rates: vec![rate],
            start_time: 0.0,
            end_time: 60.0,
        }
    }

    fn density_at(center: f64, grid: &Grid) -> Density {
        Density::from_initial_profile(grid, &gaussian_profile(grid, center, 1.0)).unwrap()
    }

    #[test]
    fn c_h_examples() {
        assert_eq!(compute_c_h(1, 1.0, 1.0, 5.0), 0.0);
        assert_relative_eq!(compute_c_h(3, 1.0, 1.0, 1.0), 6.0, epsilon = 1e-15);
        assert_relative_eq!(
            compute_c_h(3, 1.0, 1.0, 2.0),
            4.0 * compute_c_h(3, 1.0, 1.0, 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn homogeneous_reduction() {
        let g = make_grid(30, 5, 10.0, 0.06).unwrap();
        let d = density_at(5.0, &g);
        let s = snap(300.0);
        let out = adapt_step(&StepSizeInputs {
            densities: &[d],
            grid: &g,
            dual_gradients: &[3.0],
            lipschitz_l: 1.0,
            horizon_t: 0.06,
            safety_margin: 0.01,
            prev_snapshot: &s,
            curr_snapshot: &s,
            mu: 0.5,
        })
        .unwrap();
        assert_eq!(out.product, 0.99);
        assert_relative_eq!(out.xi, 0.99f64.sqrt(), epsilon = 1e-15);
        assert_eq!(out.xi, out.varsigma);
        assert_eq!(out.h_k, 0.0);
        assert!(check_sufficient_condition(out.xi, out.varsigma, out.c_h, out.h_k));
    }

    #[test]
    fn unit_correction_halves_product() {
        // C_H * H_K = 1 gives product (1 - eps) / 2.
        let g = make_grid(40, 4, 10.0, 0.06).unwrap();
        let a = density_at(3.0, &g);
        let b = density_at(7.0, &g);
        let s = snap(300.0);
        let mut inputs = StepSizeInputs {
            densities: &[a, b],
            grid: &g,
            dual_gradients: &[1.0, 1.0],
            lipschitz_l: 1.0,
            horizon_t: 0.06,
            safety_margin: 0.01,
            prev_snapshot: &s,
            curr_snapshot: &s,
            mu: 0.0,
        };
        let h = heterogeneity_measure_time_avg(inputs.densities, &g).unwrap();
        // Choose L so that C_H * H = 1: C_H = L^2 * T * 2 * phi^2.
        let l = (1.0 / (0.06 * 2.0 * h)).sqrt();
        inputs.lipschitz_l = l;
        let out = adapt_step(&inputs).unwrap();
        assert_relative_eq!(out.c_h * out.h_k, 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.product, 0.99 / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_snapshots_no_backhaul_term() {
        let g = make_grid(30, 4, 10.0, 0.06).unwrap();
        let a = density_at(3.0, &g);
        let b = density_at(7.0, &g);
        let s = snap(320.0);
        let base = adapt_step(&StepSizeInputs {
            densities: &[a.clone(), b.clone()],
            grid: &g,
            dual_gradients: &[2.0, 2.0],
            lipschitz_l: 0.5,
            horizon_t: 0.06,
            safety_margin: 0.01,
            prev_snapshot: &s,
            curr_snapshot: &s,
            mu: 0.5,
        })
        .unwrap();
        assert_relative_eq!(
            base.c_h,
            compute_c_h(2, 0.5, 0.06, 2.0),
            epsilon = 1e-15
        );
        // A bandwidth change enlarges C_H and shrinks the product.
        let s2 = snap(300.0);
        let moved = adapt_step(&StepSizeInputs {
            densities: &[a, b],
            grid: &g,
            dual_gradients: &[2.0, 2.0],
            lipschitz_l: 0.5,
            horizon_t: 0.06,
            safety_margin: 0.01,
            prev_snapshot: &s,
            curr_snapshot: &s2,
            mu: 0.5,
        })
        .unwrap();
        assert!(moved.c_h > base.c_h);
        assert!(moved.product < base.product);
    }

    #[test]
    fn product_decreases_with_heterogeneity() {
        let g = make_grid(40, 4, 10.0, 0.06).unwrap();
        let s = snap(300.0);
        let mk = |sep: f64| {
            let a = density_at(5.0 - sep / 2.0, &g);
            let b = density_at(5.0 + sep / 2.0, &g);
            adapt_step(&StepSizeInputs {
                densities: &[a, b],
                grid: &g,
                dual_gradients: &[4.0, 4.0],
                lipschitz_l: 1.0,
                horizon_t: 0.06,
                safety_margin: 0.01,
                prev_snapshot: &s,
                curr_snapshot: &s,
                mu: 0.0,
            })
            .unwrap()
        };
        let near = mk(1.0);
        let far = mk(5.0);
        assert!(far.h_k > near.h_k);
        assert!(far.product < near.product);
        // The product always satisfies the sufficient criterion it was built from.
        for out in [near, far] {
            assert!(check_sufficient_condition(out.xi, out.varsigma, out.c_h, out.h_k));
            // By construction the ratio to the bound is exactly 1 - eps.
            let bound = 1.0 / (1.0 + out.c_h * out.h_k);
            assert_relative_eq!(out.product / bound, 0.99, epsilon = 1e-12);
        }
    }

    #[test]
    fn sufficient_condition_cases() {
        assert!(!check_sufficient_condition(0.99, 1.0, 0.5, 1.0)); // 0.99 >= 1/1.5
        assert!(check_sufficient_condition(0.99, 1.0, 0.5, 0.0)); // classical
        assert!(!check_sufficient_condition(1.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn rejects_bad_margin_and_shapes() {
        let g = make_grid(30, 4, 10.0, 0.06).unwrap();
        let d = density_at(5.0, &g);
        let s = snap(300.0);
        let mut inputs = StepSizeInputs {
            densities: &[d],
            grid: &g,
            dual_gradients: &[1.0],
            lipschitz_l: 1.0,
            horizon_t: 0.06,
            safety_margin: 1.0,
            prev_snapshot: &s,
            curr_snapshot: &s,
            mu: 0.0,
        };
        assert!(adapt_step(&inputs).is_err());
        inputs.safety_margin = 0.01;
        inputs.dual_gradients = &[1.0, 2.0];
        assert!(adapt_step(&inputs).is_err());
    }
}
