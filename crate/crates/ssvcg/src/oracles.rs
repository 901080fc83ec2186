//! Closed-form power-law formulas used as an independent verification layer.
//!
//! Everything here evaluates norms directly and never touches the allocation
//! or mechanism code paths, so tests can compare two genuinely different
//! routes to the same quantity: welfare and surplus come out of
//! `mechanism::*` via optimal allocations, and out of this module via
//! `(sum theta_i^(1/alpha))^alpha` arithmetic.

use crate::error::{Error, Result};

/// L_{1/alpha} norm of `theta`. Computed in log space so exponents like
/// 1/alpha = 100 neither overflow nor underflow: zero entries are dropped and
/// the remaining terms are scaled by the largest entry, making every
/// exponentiated ratio at most 1.
pub fn power_norm(theta: &[f64], alpha: f64) -> f64 {
    assert!(
        alpha > 0.0 && alpha < 1.0,
        "alpha must lie in (0,1), got {alpha}"
    );
    debug_assert!(theta.iter().all(|t| t.is_finite() && *t >= 0.0));
    let m = theta
        .iter()
        .copied()
        .filter(|t| *t > 0.0)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return 0.0;
    }
    let p = 1.0 / alpha;
    let s: f64 = theta
        .iter()
        .filter(|&&t| t > 0.0)
        .map(|&t| (p * (t / m).ln()).exp())
        .sum();
    m * s.powf(alpha)
}

/// Surrogate welfare at the optimal allocation: sigma_S(theta) = ||theta||_{1/alpha}.
pub fn sigma_closed(theta: &[f64], alpha: f64) -> f64 {
    power_norm(theta, alpha)
}

/// Clarke pivotal surplus: p_S(theta) = sum_j ||theta_{-j}||_{1/alpha} - (n-1)*||theta||_{1/alpha}.
pub fn ps_closed(theta: &[f64], alpha: f64) -> f64 {
    let n = theta.len();
    let mut total = -((n - 1) as f64) * power_norm(theta, alpha);
    let mut rest = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n {
        rest.clear();
        rest.extend(
            theta
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, &t)| t),
        );
        total += power_norm(&rest, alpha);
    }
    total
}

/// Worst-case surplus-to-welfare ratio without rebates, attained at the
/// all-ones profile: n*(1 - 1/n)^alpha - (n - 1). Increasing in n with limit
/// 1 - alpha.
pub fn ssvcg_worst_ratio_closed(n: usize, alpha: f64) -> f64 {
    assert!(n >= 2, "at least two agents required, got n = {n}");
    assert!(alpha > 0.0 && alpha < 1.0);
    let nf = n as f64;
    nf * (1.0 - 1.0 / nf).powf(alpha) - (nf - 1.0)
}

/// Common equilibrium bid of n identical agents:
/// mu_NE = v'(1/n) / ((1 - alpha) * n^alpha).
pub fn mu_ne_closed(vprime_at_1_over_n: f64, n: usize, alpha: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!(
            "equilibrium bid formula needs n >= 2, got n = {n}"
        )));
    }
    if !(vprime_at_1_over_n > 0.0 && vprime_at_1_over_n.is_finite()) {
        return Err(Error::Domain(format!(
            "marginal value at 1/n must be positive and finite, got {vprime_at_1_over_n}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(vprime_at_1_over_n / ((1.0 - alpha) * (n as f64).powf(alpha)))
}
