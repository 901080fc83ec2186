//! Bid profiles and welfare-optimal allocations of the divisible good.
//!
//! The planner splits one unit among n agents to maximize
//! `sum_i theta_i * U(a_i)` subject to `sum a_i <= 1`, `a_i >= 0`. For the
//! power-law curve the optimum is the closed form
//! `a_i = theta_i^(1/alpha) / sum_j theta_j^(1/alpha)`; for custom curves it
//! is found by water-filling on the common marginal value.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::surrogate::{u_derivative, Marginal, SurrogateSpec};

/// A vector of scalar bids, one per agent. Entries are finite and
/// nonnegative; at least two agents.
#[derive(Clone, Debug, PartialEq)]
pub struct BidProfile {
    theta: Vec<f64>,
}

impl BidProfile {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::Domain(format!(
                "a bid profile needs at least 2 agents, got {}",
                theta.len()
            )));
        }
        if let Some(bad) = theta.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::Domain(format!(
                "bids must be finite and nonnegative, got {bad}"
            )));
        }
        Ok(BidProfile { theta })
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn is_zero(&self) -> bool {
        self.theta.iter().all(|t| *t == 0.0)
    }

    /// Descending view plus the rank-to-agent map: `perm[rank]` is the
    /// original index of the bid at that rank. Equal bids keep their
    /// original relative order, which fixes ranks deterministically; tied
    /// agents get equal rebates anyway because rebates only read the sorted
    /// values.
    pub fn sorted_desc(&self) -> (OrderedProfile, Vec<usize>) {
        let mut perm: Vec<usize> = (0..self.n()).collect();
        perm.sort_by(|&a, &b| {
            self.theta[b]
                .partial_cmp(&self.theta[a])
                .expect("bids are finite")
                .then(a.cmp(&b))
        });
        let sorted: Vec<f64> = perm.iter().map(|&i| self.theta[i]).collect();
        (OrderedProfile::new_unchecked(sorted), perm)
    }
}

/// A bid profile already sorted in descending order. Constraint-side
/// operations (rebates, constraint rows, covers) work on this form.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderedProfile {
    inner: BidProfile,
}

impl OrderedProfile {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        let inner = BidProfile::new(theta)?;
        if inner.theta.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::NotDescending);
        }
        Ok(OrderedProfile { inner })
    }

    /// For generators that produce sorted output by construction.
    pub(crate) fn new_unchecked(theta: Vec<f64>) -> Self {
        debug_assert!(theta.windows(2).all(|w| w[0] >= w[1]));
        OrderedProfile {
            inner: BidProfile { theta },
        }
    }

    pub fn n(&self) -> usize {
        self.inner.n()
    }

    pub fn theta(&self) -> &[f64] {
        self.inner.theta()
    }

    pub fn profile(&self) -> &BidProfile {
        &self.inner
    }
}

/// Shares of the good, in the same agent order as the profile that produced
/// them. Sums to 1 whenever any bid is positive, to 0 otherwise.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Allocation {
    pub shares: Vec<f64>,
}

impl Allocation {
    pub fn total(&self) -> f64 {
        self.shares.iter().sum()
    }
}

/// Welfare-optimal split of the good for the given bids.
pub fn efficient_allocation(spec: &SurrogateSpec, theta: &BidProfile) -> Result<Allocation> {
    let shares = allocate_slice(spec, theta.theta())?;
    Ok(Allocation { shares })
}

/// Welfare-optimal split with agent `i` removed: the allocation the other
/// n-1 agents would get on their own, in original order minus `i`.
pub fn allocation_without_agent(
    spec: &SurrogateSpec,
    theta: &BidProfile,
    i: usize,
) -> Result<Allocation> {
    let n = theta.n();
    if i >= n {
        return Err(Error::AgentIndex { index: i, n });
    }
    let reduced: Vec<f64> = theta
        .theta()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, &t)| t)
        .collect();
    let shares = allocate_slice(spec, &reduced)?;
    Ok(Allocation { shares })
}

/// Core allocator on a raw bid slice (length >= 1; leave-one-out of a
/// two-agent profile is a one-agent problem).
pub(crate) fn allocate_slice(spec: &SurrogateSpec, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.iter().all(|t| *t == 0.0) {
        return Ok(vec![0.0; theta.len()]);
    }
    match spec {
        SurrogateSpec::PowerLaw { alpha } => Ok(power_law_closed_form(theta, *alpha)),
        SurrogateSpec::Custom { .. } => {
            let active: Vec<usize> = (0..theta.len()).filter(|&i| theta[i] > 0.0).collect();
            let solved = waterfill_shares(active.len(), |k, a| {
                scale_marginal(u_derivative(spec, a), theta[active[k]])
            })?;
            let mut shares = vec![0.0; theta.len()];
            for (k, &i) in active.iter().enumerate() {
                shares[i] = solved[k];
            }
            Ok(shares)
        }
    }
}

/// `a_i = theta_i^(1/alpha) / sum_j theta_j^(1/alpha)`, computed on bids
/// normalized by the largest so huge exponents (alpha near 0) cannot
/// overflow. The ratio is scale-free, so the normalization is exact.
fn power_law_closed_form(theta: &[f64], alpha: f64) -> Vec<f64> {
    let m = theta.iter().copied().fold(0.0, f64::max);
    debug_assert!(m > 0.0);
    let p = 1.0 / alpha;
    let weights: Vec<f64> = theta
        .iter()
        .map(|&t| if t > 0.0 { (p * (t / m).ln()).exp() } else { 0.0 })
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| w / sum).collect()
}

fn scale_marginal(m: Marginal, theta: f64) -> Marginal {
    match m {
        Marginal::Finite(v) => Marginal::Finite(theta * v),
        Marginal::Infinite => Marginal::Infinite,
    }
}

const WATERFILL_ITER_CAP: usize = 200;
const WATERFILL_TOL: f64 = 1e-12;

/// Water-filling: find the common marginal value `lambda` at which the
/// agents' demands `a_k(lambda)` (each solving `marginal(k, a) = lambda`,
/// clamped to [0,1]) sum to exactly one unit, and return those demands.
///
/// `marginal(k, a)` must be strictly decreasing in `a` for every `k`, with a
/// finite value at `a = 1`. Total demand is then decreasing in `lambda`,
/// which makes the outer solve a bracketed bisection; each demand is itself
/// found by an inner bisection. Used for custom curves and for true
/// valuation profiles; the power-law path never comes here.
pub(crate) fn waterfill_shares(
    count: usize,
    marginal: impl Fn(usize, f64) -> Marginal,
) -> Result<Vec<f64>> {
    debug_assert!(count >= 1);
    let mut at_full = Vec::with_capacity(count);
    for k in 0..count {
        match marginal(k, 1.0) {
            Marginal::Finite(v) if v > 0.0 => at_full.push(v),
            _ => {
                return Err(Error::Domain(
                    "marginal at full allocation must be finite and positive".into(),
                ))
            }
        }
    }

    let demand_at = |lambda: f64| -> Vec<f64> {
        (0..count)
            .map(|k| invert_marginal(|a| marginal(k, a), at_full[k], lambda))
            .collect()
    };
    let total = |d: &[f64]| d.iter().sum::<f64>();

    // At lambda = max_k marginal(k, 1) the top agent alone demands the whole
    // good, so total demand is at least 1; grow the bracket upward until
    // demand drops below 1.
    let mut lo = at_full.iter().copied().fold(0.0, f64::max);
    let d_lo = demand_at(lo);
    if (total(&d_lo) - 1.0).abs() <= WATERFILL_TOL {
        return Ok(d_lo);
    }
    let mut hi = lo;
    let mut found = false;
    for _ in 0..WATERFILL_ITER_CAP {
        hi *= 2.0;
        if total(&demand_at(hi)) < 1.0 {
            found = true;
            break;
        }
    }
    if !found {
        return Err(Error::Convergence {
            what: "water-filling bracket growth",
            iterations: WATERFILL_ITER_CAP,
        });
    }

    for _ in 0..WATERFILL_ITER_CAP {
        let mid = 0.5 * (lo + hi);
        let d = demand_at(mid);
        let s = total(&d);
        if (s - 1.0).abs() <= WATERFILL_TOL {
            return Ok(d);
        }
        if s > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Convergence {
        what: "water-filling bisection",
        iterations: WATERFILL_ITER_CAP,
    })
}

/// Solve `marginal(a) = lambda` for `a` in [0,1]; the marginal is strictly
/// decreasing, so clamp at the endpoints and bisect in between.
fn invert_marginal(marginal: impl Fn(f64) -> Marginal, at_one: f64, lambda: f64) -> f64 {
    if at_one >= lambda {
        return 1.0;
    }
    if !marginal(0.0).exceeds(lambda) {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    // 64 halvings shrink the bracket to ~5e-20, far below any tolerance
    // downstream consumers use.
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if marginal(mid).exceeds(lambda) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::u_value;

    fn power(alpha: f64) -> SurrogateSpec {
        SurrogateSpec::power_law(alpha).unwrap()
    }

    /// The same curve as `power(alpha)` but opaque, forcing the
    /// water-filling path.
    fn power_as_custom(alpha: f64) -> SurrogateSpec {
        SurrogateSpec::custom(
            move |a| a.powf(1.0 - alpha),
            move |a| {
                if a == 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 - alpha) * a.powf(-alpha)
                }
            },
        )
    }

    #[test]
    fn profile_validation() {
        assert!(BidProfile::new(vec![1.0]).is_err());
        assert!(BidProfile::new(vec![1.0, -0.1]).is_err());
        assert!(BidProfile::new(vec![1.0, f64::NAN]).is_err());
        assert!(BidProfile::new(vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn ordered_profile_rejects_unsorted() {
        assert!(OrderedProfile::new(vec![0.5, 1.0]).is_err());
        assert!(OrderedProfile::new(vec![1.0, 1.0, 0.2]).is_ok());
    }

    #[test]
    fn sort_maps_ranks_to_agents() {
        let p = BidProfile::new(vec![0.3, 1.0, 0.7]).unwrap();
        let (ordered, perm) = p.sorted_desc();
        assert_eq!(ordered.theta(), &[1.0, 0.7, 0.3]);
        assert_eq!(perm, vec![1, 2, 0]);
    }

    #[test]
    fn sort_breaks_ties_by_original_index() {
        let p = BidProfile::new(vec![0.5, 1.0, 0.5]).unwrap();
        let (_, perm) = p.sorted_desc();
        assert_eq!(perm, vec![1, 0, 2]);
    }

    #[test]
    fn closed_form_matches_hand_computed_shares() {
        let p = BidProfile::new(vec![1.0, 1.0, 0.25]).unwrap();
        let a = efficient_allocation(&power(0.5), &p).unwrap();
        // Weights theta^2 = (1, 1, 0.0625), total 2.0625.
        assert!((a.shares[0] - 16.0 / 33.0).abs() < 1e-12);
        assert!((a.shares[1] - 16.0 / 33.0).abs() < 1e-12);
        assert!((a.shares[2] - 1.0 / 33.0).abs() < 1e-12);
        assert!((a.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_profile_gets_nothing() {
        let p = BidProfile::new(vec![0.0, 0.0, 0.0]).unwrap();
        let a = efficient_allocation(&power(0.5), &p).unwrap();
        assert_eq!(a.shares, vec![0.0, 0.0, 0.0]);
        let c = power_as_custom(0.5);
        assert_eq!(efficient_allocation(&c, &p).unwrap().shares, a.shares);
    }

    #[test]
    fn equal_bids_split_evenly_at_any_scale() {
        for mu in [1e-6, 1.0, 7.3e4] {
            let p = BidProfile::new(vec![mu; 4]).unwrap();
            let a = efficient_allocation(&power(0.5), &p).unwrap();
            for s in &a.shares {
                assert!((s - 0.25).abs() < 1e-12, "share {s} at scale {mu}");
            }
        }
    }

    #[test]
    fn allocation_is_scale_free() {
        let spec = power(0.25);
        let base = BidProfile::new(vec![1.0, 0.6, 0.3, 0.05]).unwrap();
        let a0 = efficient_allocation(&spec, &base).unwrap();
        for lambda in [1e-3, 17.0, 2.5e8] {
            let scaled =
                BidProfile::new(base.theta().iter().map(|t| t * lambda).collect()).unwrap();
            let a1 = efficient_allocation(&spec, &scaled).unwrap();
            for (x, y) in a0.shares.iter().zip(&a1.shares) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_positive_bidder_takes_everything() {
        let p = BidProfile::new(vec![0.0, 3.0, 0.0]).unwrap();
        let a = efficient_allocation(&power(0.75), &p).unwrap();
        assert_eq!(a.shares, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn extreme_alpha_profiles_stay_normalized() {
        // alpha = 0.01 turns bid ratios into 100th powers; the log-space
        // route must keep the shares finite and summing to 1.
        let p = BidProfile::new(vec![1000.0, 999.0, 1.0, 0.0]).unwrap();
        let a = efficient_allocation(&power(0.01), &p).unwrap();
        assert!(a.shares.iter().all(|s| s.is_finite() && *s >= 0.0));
        assert!((a.total() - 1.0).abs() < 1e-9);
        assert_eq!(a.shares[3], 0.0);
        assert!(a.shares[0] > a.shares[1]);
    }

    #[test]
    fn leave_one_out_examples() {
        let spec = power(0.5);
        let p = BidProfile::new(vec![1.0, 1.0, 0.25]).unwrap();
        let drop3 = allocation_without_agent(&spec, &p, 2).unwrap();
        assert!((drop3.shares[0] - 0.5).abs() < 1e-12);
        assert!((drop3.shares[1] - 0.5).abs() < 1e-12);
        let drop1 = allocation_without_agent(&spec, &p, 0).unwrap();
        assert!((drop1.shares[0] - 16.0 / 17.0).abs() < 1e-12);
        assert!((drop1.shares[1] - 1.0 / 17.0).abs() < 1e-12);

        let q = BidProfile::new(vec![1.0, 0.0, 0.0]).unwrap();
        let drop2 = allocation_without_agent(&spec, &q, 1).unwrap();
        assert_eq!(drop2.shares, vec![1.0, 0.0]);
    }

    #[test]
    fn leave_one_out_of_two_agents_is_a_one_agent_problem() {
        let p = BidProfile::new(vec![1.0, 0.5]).unwrap();
        let a = allocation_without_agent(&power(0.5), &p, 0).unwrap();
        assert_eq!(a.shares, vec![1.0]);
        assert!(allocation_without_agent(&power(0.5), &p, 2).is_err());
    }

    #[test]
    fn removal_only_increases_remaining_shares() {
        let spec = power(0.5);
        let p = BidProfile::new(vec![1.0, 0.8, 0.5, 0.2]).unwrap();
        let full = efficient_allocation(&spec, &p).unwrap();
        for i in 0..4 {
            let reduced = allocation_without_agent(&spec, &p, i).unwrap();
            let others: Vec<usize> = (0..4).filter(|k| *k != i).collect();
            for (pos, &j) in others.iter().enumerate() {
                assert!(reduced.shares[pos] >= full.shares[j] - 1e-12);
            }
        }
    }

    #[test]
    fn waterfill_agrees_with_closed_form() {
        let cases: [&[f64]; 4] = [
            &[1.0, 1.0, 0.25],
            &[1.0, 0.8, 0.5, 0.2],
            &[2.0, 1.0],
            &[1.0, 0.0, 0.3],
        ];
        for alpha in [0.25, 0.5, 0.75] {
            let closed = power(alpha);
            let opaque = power_as_custom(alpha);
            for theta in cases {
                let p = BidProfile::new(theta.to_vec()).unwrap();
                let a = efficient_allocation(&closed, &p).unwrap();
                let b = efficient_allocation(&opaque, &p).unwrap();
                for (x, y) in a.shares.iter().zip(&b.shares) {
                    assert!((x - y).abs() < 1e-8, "{theta:?} alpha {alpha}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn marginal_values_equalize_at_optimum() {
        // Stationarity: theta_i * U'(a_i) is the same for every agent with a
        // positive bid.
        let spec = power(0.5);
        let p = BidProfile::new(vec![1.0, 0.7, 0.4, 0.1]).unwrap();
        let a = efficient_allocation(&spec, &p).unwrap();
        let lambdas: Vec<f64> = p
            .theta()
            .iter()
            .zip(&a.shares)
            .map(|(t, s)| t * u_derivative(&spec, *s).finite().unwrap())
            .collect();
        for l in &lambdas {
            assert!((l - lambdas[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn waterfill_rejects_non_conforming_curve() {
        // Marginal increasing in a: total demand is not monotone and the
        // bracket can never close. The solver must fail loudly, not hang.
        let bad = SurrogateSpec::custom(|a| a * a, |a| 2.0 * a);
        let p = BidProfile::new(vec![1.0, 1.0]).unwrap();
        assert!(efficient_allocation(&bad, &p).is_err());
    }

    #[test]
    fn welfare_at_optimum_beats_perturbations() {
        // Spot check that the reported optimum is actually optimal for a
        // custom curve: nudging mass between agents cannot increase welfare.
        let spec = SurrogateSpec::custom(|a: f64| (1.0 + a).ln(), |a: f64| 1.0 / (1.0 + a));
        let p = BidProfile::new(vec![1.0, 0.5, 0.25]).unwrap();
        let a = efficient_allocation(&spec, &p).unwrap();
        let welfare = |shares: &[f64]| -> f64 {
            p.theta()
                .iter()
                .zip(shares)
                .map(|(t, s)| t * u_value(&spec, *s))
                .sum()
        };
        let base = welfare(&a.shares);
        let eps = 1e-4;
        for i in 0..3 {
            for j in 0..3 {
                if i == j || a.shares[i] < eps {
                    continue;
                }
                let mut moved = a.shares.clone();
                moved[i] -= eps;
                moved[j] += eps;
                if moved[j] > 1.0 {
                    continue;
                }
                assert!(welfare(&moved) <= base + 1e-9);
            }
        }
    }
}
