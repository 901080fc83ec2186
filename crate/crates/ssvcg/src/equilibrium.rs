//! True valuations and the equilibrium induced by scaling one shared curve.
//!
//! When every agent's valuation is concave, the profile where each agent
//! bids theta_i = v_i'(a*_i) / U'(a*_i) at the first-best shares a* makes
//! the surrogate allocation reproduce a* exactly, and no unilateral bid
//! change helps. This module computes those shares and bids and provides
//! numeric audits: a best-response scan over one agent's bid and a
//! participation check at equilibrium.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::allocation::{allocate_slice, efficient_allocation, waterfill_shares, BidProfile};
use crate::error::{Error, Result};
use crate::mechanism::{payments, vp_deficit, RebateCoefficients};
use crate::surrogate::{u_derivative, u_value, Marginal, SurrogateSpec};

/// A deviation must improve utility by more than this before the scan
/// declares the bid not a best response.
pub const BR_GAIN_TOL: f64 = 1e-6;

type ValFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One agent's private valuation over shares of the good.
#[derive(Clone)]
pub enum ValuationSpec {
    /// v(a) = w * a^beta with w > 0 and beta in (0, 1).
    Power { w: f64, beta: f64 },
    Custom { v: ValFn, v_prime: ValFn },
}

impl fmt::Debug for ValuationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValuationSpec::Power { w, beta } => {
                f.debug_struct("Power").field("w", w).field("beta", beta).finish()
            }
            ValuationSpec::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl ValuationSpec {
    pub fn power(w: f64, beta: f64) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("valuation weight must be positive, got {w}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!(
                "valuation exponent must lie in (0, 1), got {beta}"
            )));
        }
        Ok(ValuationSpec::Power { w, beta })
    }

    pub fn custom(
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ValuationSpec::Custom {
            v: Arc::new(v),
            v_prime: Arc::new(v_prime),
        }
    }

    pub fn value(&self, a: f64) -> f64 {
        match self {
            ValuationSpec::Power { w, beta } => {
                if a <= 0.0 {
                    0.0
                } else {
                    w * a.powf(*beta)
                }
            }
            ValuationSpec::Custom { v, .. } => v(a),
        }
    }

    pub fn marginal(&self, a: f64) -> Marginal {
        match self {
            ValuationSpec::Power { w, beta } => {
                if a <= 0.0 {
                    Marginal::Infinite
                } else {
                    Marginal::Finite(w * beta * a.powf(beta - 1.0))
                }
            }
            ValuationSpec::Custom { v_prime, .. } => {
                let m = v_prime(a);
                if m.is_finite() {
                    Marginal::Finite(m)
                } else {
                    Marginal::Infinite
                }
            }
        }
    }
}

/// Parses a JSON array like `[{"kind": "power", "w": 2.0, "beta": 0.5}]`.
pub fn valuations_from_json_value(value: &serde_json::Value) -> Result<Vec<ValuationSpec>> {
    let arr = value.as_array().ok_or(Error::Parse {
        what: "valuations",
        detail: "expected a JSON array".into(),
    })?;
    arr.iter()
        .enumerate()
        .map(|(i, entry)| {
            let kind = entry
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or(Error::Parse {
                    what: "valuations",
                    detail: format!("entry {i} is missing a string `kind`"),
                })?;
            match kind {
                "power" => {
                    let w = entry.get("w").and_then(|v| v.as_f64()).ok_or(Error::Parse {
                        what: "valuations",
                        detail: format!("entry {i} needs a numeric `w`"),
                    })?;
                    let beta = entry.get("beta").and_then(|v| v.as_f64()).ok_or(Error::Parse {
                        what: "valuations",
                        detail: format!("entry {i} needs a numeric `beta`"),
                    })?;
                    ValuationSpec::power(w, beta)
                }
                other => Err(Error::Parse {
                    what: "valuations",
                    detail: format!("entry {i} has unsupported kind {other:?}"),
                }),
            }
        })
        .collect()
}

/// First-best shares: maximize the sum of true valuations over the simplex
/// by the same water-filling scheme the allocation rule uses.
pub fn true_efficient_allocation(vals: &[ValuationSpec]) -> Result<Vec<f64>> {
    if vals.len() < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 agents, got {}",
            vals.len()
        )));
    }
    waterfill_shares(vals.len(), |i, a| vals[i].marginal(a))
}

#[derive(Clone, Debug)]
pub struct NashEquilibrium {
    pub theta: BidProfile,
    /// First-best shares; the surrogate allocation at `theta` reproduces
    /// them.
    pub allocation: Vec<f64>,
}

/// The bid profile theta_i = v_i'(a*_i) / U'(a*_i) at the first-best a*.
/// Agents allocated nothing bid zero.
pub fn nash_bids(vals: &[ValuationSpec], spec: &SurrogateSpec) -> Result<NashEquilibrium> {
    let shares = true_efficient_allocation(vals)?;
    let mut theta = Vec::with_capacity(shares.len());
    for (i, &a) in shares.iter().enumerate() {
        if a <= 0.0 {
            theta.push(0.0);
            continue;
        }
        let v_m = match vals[i].marginal(a) {
            Marginal::Finite(m) => m,
            Marginal::Infinite => {
                return Err(Error::Domain(format!(
                    "agent {i} has an infinite marginal at its positive share {a}"
                )))
            }
        };
        let u_m = match u_derivative(spec, a) {
            Marginal::Finite(m) if m > 0.0 => m,
            _ => {
                return Err(Error::Domain(format!(
                    "curve slope is unusable at share {a}"
                )))
            }
        };
        theta.push(v_m / u_m);
    }
    Ok(NashEquilibrium {
        theta: BidProfile::new(theta)?,
        allocation: shares,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BestResponseReport {
    pub agent: usize,
    pub own_bid: f64,
    pub own_utility: f64,
    pub best_bid: f64,
    pub best_utility: f64,
    /// best_utility - own_utility; at most zero up to search noise when the
    /// bid is a best response.
    pub gain: f64,
    pub is_best_response: bool,
}

/// Scans agent i's bid over a multiplicative grid around its current value
/// (plus zero), refines the best cell by golden-section search, and reports
/// the largest utility gain found. Rebates never depend on the agent's own
/// bid, so they are left out: utilities here are pivotal-payment utilities,
/// normalized so that bidding zero with nothing allocated gives zero.
pub fn verify_best_response(
    vals: &[ValuationSpec],
    spec: &SurrogateSpec,
    theta: &BidProfile,
    i: usize,
    grid: usize,
) -> Result<BestResponseReport> {
    let n = theta.n();
    if i >= n {
        return Err(Error::AgentIndex { index: i, n });
    }
    if vals.len() != n {
        return Err(Error::Domain(format!(
            "{} valuations for {n} agents",
            vals.len()
        )));
    }
    if grid < 8 {
        return Err(Error::Domain(format!("grid of {grid} points is too coarse")));
    }

    let others: Vec<f64> = theta
        .theta()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, &t)| t)
        .collect();
    let shares_without = allocate_slice(spec, &others)?;
    let welfare_without: f64 = others
        .iter()
        .zip(&shares_without)
        .map(|(t, s)| t * u_value(spec, *s))
        .sum();

    let utility_at = |bid: f64| -> Result<f64> {
        let mut full = theta.theta().to_vec();
        full[i] = bid;
        let profile = BidProfile::new(full)?;
        let alloc = efficient_allocation(spec, &profile)?;
        let welfare_others: f64 = profile
            .theta()
            .iter()
            .zip(&alloc.shares)
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, (t, s))| t * u_value(spec, *s))
            .sum();
        Ok(vals[i].value(alloc.shares[i]) + welfare_others - welfare_without)
    };

    let own_bid = theta.theta()[i];
    let center = if own_bid > 0.0 { own_bid } else { 1.0 };
    let span = 50.0_f64;
    let ratio = (span * span).powf(1.0 / (grid - 1) as f64);
    let mut candidates = Vec::with_capacity(grid + 2);
    candidates.push(0.0);
    let mut b = center / span;
    for _ in 0..grid {
        candidates.push(b);
        b *= ratio;
    }
    candidates.push(own_bid);

    let own_utility = utility_at(own_bid)?;
    let mut best_idx = 0usize;
    let mut best_utility = f64::NEG_INFINITY;
    for (k, &cand) in candidates.iter().enumerate() {
        let u = utility_at(cand)?;
        if u > best_utility {
            best_utility = u;
            best_idx = k;
        }
    }
    let mut best_bid = candidates[best_idx];

    // Golden-section refinement around the best grid cell. The candidates
    // are not sorted (zero and the own bid were appended), so bracket with
    // the nearest candidates on each side.
    let mut lo = 0.0f64;
    let mut hi = f64::INFINITY;
    for &cand in &candidates {
        if cand < best_bid && cand > lo {
            lo = cand;
        }
        if cand > best_bid && cand < hi {
            hi = cand;
        }
    }
    if !hi.is_finite() {
        hi = best_bid * ratio + 1e-9;
    }
    let phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut a_pt = hi - phi * (hi - lo);
    let mut b_pt = lo + phi * (hi - lo);
    let mut f_a = utility_at(a_pt)?;
    let mut f_b = utility_at(b_pt)?;
    let mut lo_v = lo;
    let mut hi_v = hi;
    for _ in 0..80 {
        if f_a < f_b {
            lo_v = a_pt;
            a_pt = b_pt;
            f_a = f_b;
            b_pt = lo_v + phi * (hi_v - lo_v);
            f_b = utility_at(b_pt)?;
        } else {
            hi_v = b_pt;
            b_pt = a_pt;
            f_b = f_a;
            a_pt = hi_v - phi * (hi_v - lo_v);
            f_a = utility_at(a_pt)?;
        }
        if hi_v - lo_v < 1e-12 * (1.0 + center) {
            break;
        }
    }
    let refined = if f_a > f_b { (a_pt, f_a) } else { (b_pt, f_b) };
    if refined.1 > best_utility {
        best_utility = refined.1;
        best_bid = refined.0;
    }

    let gain = best_utility - own_utility;
    Ok(BestResponseReport {
        agent: i,
        own_bid,
        own_utility,
        best_bid,
        best_utility,
        gain,
        is_best_response: gain <= BR_GAIN_TOL,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AgentVpReport {
    pub agent: usize,
    /// True value of the share received minus the net payment.
    pub utility: f64,
    /// Rebate needed to make participation voluntary at this profile.
    pub deficit: f64,
    pub rebate: f64,
    pub participates: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumVpReport {
    pub theta: Vec<f64>,
    pub agents: Vec<AgentVpReport>,
}

/// Runs the mechanism at the equilibrium bids and checks, per agent, that
/// utility is nonnegative and the rebate covers the participation deficit.
pub fn verify_equilibrium_vp(
    vals: &[ValuationSpec],
    spec: &SurrogateSpec,
    c: &RebateCoefficients,
) -> Result<EquilibriumVpReport> {
    let ne = nash_bids(vals, spec)?;
    let outcome = payments(spec, &ne.theta, c)?;
    let mut agents = Vec::with_capacity(vals.len());
    for (i, val) in vals.iter().enumerate() {
        let utility = val.value(outcome.allocation.shares[i]) - outcome.payments[i];
        let deficit = vp_deficit(spec, &ne.theta, i, |a| val.value(a))?;
        agents.push(AgentVpReport {
            agent: i,
            utility,
            deficit,
            rebate: outcome.rebates[i],
            participates: utility >= -1e-9,
        });
    }
    Ok(EquilibriumVpReport {
        theta: ne.theta.theta().to_vec(),
        agents,
    })
}
