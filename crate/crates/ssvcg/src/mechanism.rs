//! Welfare, pivotal payments, rebates, and the worst-case objective.
//!
//! With bid profile theta and optimal shares a*, agent i pays the
//! externality it imposes on the others, minus a rebate that depends only on
//! the other agents' bids:
//!
//!   p_i = -sum_{j!=i} theta_j U(a*_j) + sum_{j!=i} theta_j U(a*_{-i,j}) - r_i
//!
//! With zero rebates the payments sum to the pivotal surplus p_S. Rebates
//! return part of that surplus; the design goal elsewhere in this crate is
//! to make the retained fraction (p_S - sum r_i)/sigma_S small in the worst
//! case over profiles.

use serde::{Deserialize, Serialize};

use crate::allocation::{allocate_slice, efficient_allocation, Allocation, BidProfile, OrderedProfile};
use crate::error::{Error, Result};
use crate::par;
use crate::surrogate::{u_value, SurrogateSpec};

/// Slack allowed when checking the voluntary-participation partial sums
/// sum_{i<=k} c_i >= 0.
pub const PARTIAL_SUM_TOL: f64 = 1e-12;

/// Coefficients (c_2, ..., c_{n-1}) of the linear rebate; c_0 = c_1 = 0
/// always (any other choice either breaks feasibility at extreme profiles or
/// wastes surplus). Valid coefficients keep every partial sum
/// sum_{i=2}^k c_i nonnegative, which is exactly voluntary participation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCoefficients")]
pub struct RebateCoefficients {
    n: usize,
    c: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCoefficients {
    n: usize,
    c: Vec<f64>,
}

impl TryFrom<RawCoefficients> for RebateCoefficients {
    type Error = Error;

    fn try_from(raw: RawCoefficients) -> Result<Self> {
        RebateCoefficients::new(raw.n, raw.c)
    }
}

impl RebateCoefficients {
    pub fn new(n: usize, c: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::BadCoefficients(format!(
                "rebates are defined for n >= 2 agents, got n = {n}"
            )));
        }
        if c.len() != n - 2 {
            return Err(Error::BadCoefficients(format!(
                "expected {} coefficients (c_2..c_{}) for n = {n}, got {}",
                n - 2,
                n - 1,
                c.len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCoefficients("coefficients must be finite".into()));
        }
        let mut sum = 0.0;
        for (k, v) in c.iter().enumerate() {
            sum += v;
            if sum < -PARTIAL_SUM_TOL {
                return Err(Error::BadCoefficients(format!(
                    "partial sum through c_{} is {sum}, breaking voluntary participation",
                    k + 2
                )));
            }
        }
        Ok(RebateCoefficients { n, c })
    }

    pub fn zero(n: usize) -> Self {
        RebateCoefficients {
            n,
            c: vec![0.0; n.saturating_sub(2)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The coefficient vector (c_2, ..., c_{n-1}); empty for n = 2.
    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Cumulative sums (sum_{i=2}^k c_i) for k = 2..n-1.
    pub fn partial_sums(&self) -> Vec<f64> {
        self.c
            .iter()
            .scan(0.0, |acc, v| {
                *acc += v;
                Some(*acc)
            })
            .collect()
    }
}

/// Surrogate welfare sigma_S: total reported value at the optimal shares.
pub fn surrogate_welfare(spec: &SurrogateSpec, theta: &BidProfile) -> Result<f64> {
    welfare_of_slice(spec, theta.theta())
}

/// Pivotal surplus p_S: total payment collected under zero rebates,
///   p_S = -(n-1) * sigma_S(theta) + sum_i sigma_S(theta_{-i}).
pub fn clarke_surplus(spec: &SurrogateSpec, theta: &BidProfile) -> Result<f64> {
    Ok(surplus_and_welfare(spec, theta.theta())?.0)
}

fn welfare_of_slice(spec: &SurrogateSpec, theta: &[f64]) -> Result<f64> {
    let shares = allocate_slice(spec, theta)?;
    Ok(theta
        .iter()
        .zip(&shares)
        .map(|(t, s)| t * u_value(spec, *s))
        .sum())
}

/// (p_S, sigma_S) sharing one pass over the leave-one-out problems.
pub(crate) fn surplus_and_welfare(spec: &SurrogateSpec, theta: &[f64]) -> Result<(f64, f64)> {
    let n = theta.len();
    let sigma = welfare_of_slice(spec, theta)?;
    let mut surplus = -((n - 1) as f64) * sigma;
    let mut reduced = Vec::with_capacity(n - 1);
    for i in 0..n {
        reduced.clear();
        reduced.extend(
            theta
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, &t)| t),
        );
        surplus += welfare_of_slice(spec, &reduced)?;
    }
    Ok((surplus, sigma))
}

/// Rebate of the agent holding rank `rank` (0 = highest bid) in the sorted
/// profile: a linear form in the other agents' bids,
///   r = sum_{j=2}^{i-1} c_j b_j + sum_{j=i}^{n-1} c_j b_{j+1}
/// in 1-based rank terms with i = rank + 1. The own bid b_i never appears.
pub fn rebate(c: &RebateCoefficients, b_ordered: &OrderedProfile, rank: usize) -> Result<f64> {
    let n = b_ordered.n();
    if c.n() != n {
        return Err(Error::BadCoefficients(format!(
            "coefficients sized for n = {}, profile has n = {n}",
            c.n()
        )));
    }
    if rank >= n {
        return Err(Error::AgentIndex { index: rank, n });
    }
    let theta = b_ordered.theta();
    let i = rank + 1;
    let mut r = 0.0;
    for (idx, cj) in c.c().iter().enumerate() {
        let j = idx + 2;
        if j < i {
            r += cj * theta[j - 1];
        } else {
            r += cj * theta[j];
        }
    }
    Ok(r)
}

/// Total rebate paid out across all agents, by direct per-rank summation.
pub fn total_rebate(c: &RebateCoefficients, b_ordered: &OrderedProfile) -> Result<f64> {
    let mut sum = 0.0;
    for rank in 0..b_ordered.n() {
        sum += rebate(c, b_ordered, rank)?;
    }
    Ok(sum)
}

/// Full outcome of one auction round.
#[derive(Clone, Debug, Serialize)]
pub struct MechanismOutcome {
    pub theta: Vec<f64>,
    pub allocation: Allocation,
    pub payments: Vec<f64>,
    pub rebates: Vec<f64>,
    #[serde(rename = "p_S")]
    pub surplus_ps: f64,
    #[serde(rename = "sigma_S")]
    pub welfare_sigma_s: f64,
}

/// Runs one auction round: allocation, per-agent pivotal payments net of
/// rebates, and the aggregate surplus and welfare. Rebates are evaluated on
/// the descending-sorted profile and scattered back to agent identities.
pub fn payments(
    spec: &SurrogateSpec,
    theta: &BidProfile,
    c: &RebateCoefficients,
) -> Result<MechanismOutcome> {
    let n = theta.n();
    let allocation = efficient_allocation(spec, theta)?;
    let values: Vec<f64> = theta
        .theta()
        .iter()
        .zip(&allocation.shares)
        .map(|(t, s)| t * u_value(spec, *s))
        .collect();
    let sigma: f64 = values.iter().sum();

    let (ordered, perm) = theta.sorted_desc();
    let mut rebates = vec![0.0; n];
    for rank in 0..n {
        rebates[perm[rank]] = rebate(c, &ordered, rank)?;
    }

    let mut pay = vec![0.0; n];
    let mut surplus = 0.0;
    let mut reduced = Vec::with_capacity(n - 1);
    for i in 0..n {
        reduced.clear();
        reduced.extend(
            theta
                .theta()
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, &t)| t),
        );
        let others_now = sigma - values[i];
        let others_without_i = welfare_of_slice(spec, &reduced)?;
        let pivotal = others_without_i - others_now;
        surplus += pivotal;
        pay[i] = pivotal - rebates[i];
    }

    Ok(MechanismOutcome {
        theta: theta.theta().to_vec(),
        allocation,
        payments: pay,
        rebates,
        surplus_ps: surplus,
        welfare_sigma_s: sigma,
    })
}

/// Shortfall of agent i's pivotal payment against its true value:
///   q_i = -v_i(a*_i) - sum_{j!=i} theta_j U(a*_j) + sum_{j!=i} theta_j U(a*_{-i,j}).
/// Participation is voluntary for agent i exactly when its rebate covers
/// this: r_i >= q_i.
pub fn vp_deficit(
    spec: &SurrogateSpec,
    theta: &BidProfile,
    i: usize,
    v_i: impl Fn(f64) -> f64,
) -> Result<f64> {
    let n = theta.n();
    if i >= n {
        return Err(Error::AgentIndex { index: i, n });
    }
    let allocation = efficient_allocation(spec, theta)?;
    let others_now: f64 = theta
        .theta()
        .iter()
        .zip(&allocation.shares)
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, (t, s))| t * u_value(spec, *s))
        .sum();
    let reduced: Vec<f64> = theta
        .theta()
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, &t)| t)
        .collect();
    let others_without_i = welfare_of_slice(spec, &reduced)?;
    Ok(-v_i(allocation.shares[i]) + others_without_i - others_now)
}

/// Worst retained-surplus ratio over a sample set.
#[derive(Clone, Debug)]
pub struct WorstCase {
    pub value: f64,
    pub argmax: OrderedProfile,
    /// Samples skipped because their welfare was zero (the ratio's numerator
    /// also vanishes there, so they carry no information).
    pub skipped: usize,
}

/// max over samples of (p_S(theta) - sum_i r_i(theta_{-i})) / sigma_S(theta).
///
/// Sample evaluation is data-parallel; the argmax scan runs sequentially
/// over the collected values and breaks ties toward the earliest sample, so
/// the result does not depend on thread scheduling.
pub fn worst_case_ratio(
    spec: &SurrogateSpec,
    c: &RebateCoefficients,
    samples: &[OrderedProfile],
) -> Result<WorstCase> {
    if samples.is_empty() {
        return Err(Error::EmptySamples("no profiles given"));
    }
    if let Some(bad) = samples.iter().find(|s| s.n() != c.n()) {
        return Err(Error::BadCoefficients(format!(
            "coefficients sized for n = {}, sample has n = {}",
            c.n(),
            bad.n()
        )));
    }
    let evaluated: Vec<Result<Option<f64>>> = par::map_slice(samples, |profile| {
        let (surplus, sigma) = surplus_and_welfare(spec, profile.theta())?;
        if sigma <= 0.0 {
            return Ok(None);
        }
        let paid_out = total_rebate(c, profile)?;
        Ok(Some((surplus - paid_out) / sigma))
    });

    let mut best: Option<(f64, usize)> = None;
    let mut skipped = 0usize;
    for (idx, entry) in evaluated.into_iter().enumerate() {
        match entry? {
            None => skipped += 1,
            Some(value) => {
                if best.map_or(true, |(v, _)| value > v) {
                    best = Some((value, idx));
                }
            }
        }
    }
    match best {
        Some((value, idx)) => Ok(WorstCase {
            value,
            argmax: samples[idx].clone(),
            skipped,
        }),
        None => Err(Error::EmptySamples(
            "every profile had zero welfare after filtering",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles;

    fn power(alpha: f64) -> SurrogateSpec {
        SurrogateSpec::power_law(alpha).unwrap()
    }

    fn profile(theta: &[f64]) -> BidProfile {
        BidProfile::new(theta.to_vec()).unwrap()
    }

    fn ordered(theta: &[f64]) -> OrderedProfile {
        OrderedProfile::new(theta.to_vec()).unwrap()
    }

    #[test]
    fn welfare_matches_norm_route() {
        let spec = power(0.5);
        let w = surrogate_welfare(&spec, &profile(&[1.0, 1.0, 0.25])).unwrap();
        assert!((w - 1.436_140_661_634_507_2).abs() < 1e-12);
        let lone = surrogate_welfare(&spec, &profile(&[1.0, 0.0, 0.0])).unwrap();
        assert!((lone - 1.0).abs() < 1e-12);
        let zero = surrogate_welfare(&spec, &profile(&[0.0, 0.0])).unwrap();
        assert_eq!(zero, 0.0);
    }

    #[test]
    fn surplus_matches_norm_route() {
        let spec = power(0.5);
        let b2 = clarke_surplus(&spec, &profile(&[1.0, 1.0, 0.0])).unwrap();
        assert!((b2 - 0.585_786_437_626_904_9).abs() < 1e-12);
        let mixed = clarke_surplus(&spec, &profile(&[1.0, 1.0, 0.25])).unwrap();
        assert!((mixed - 0.603_485_051_912_911_1).abs() < 1e-9);
        let e3 = clarke_surplus(&spec, &profile(&[1.0, 1.0, 1.0])).unwrap();
        assert!((e3 - 0.778_539_071_981_530_8).abs() < 1e-12);
    }

    #[test]
    fn coefficient_validation() {
        assert!(RebateCoefficients::new(4, vec![0.1, -0.05]).is_ok());
        // First partial sum negative: participation would not be voluntary.
        assert!(RebateCoefficients::new(4, vec![-0.1, 0.2]).is_err());
        assert!(RebateCoefficients::new(4, vec![0.1]).is_err());
        assert!(RebateCoefficients::new(4, vec![0.1, f64::NAN]).is_err());
        assert!(RebateCoefficients::new(2, vec![]).is_ok());

        let c = RebateCoefficients::new(5, vec![0.3, -0.1, -0.2]).unwrap();
        let sums = c.partial_sums();
        assert!((sums[0] - 0.3).abs() < 1e-15);
        assert!((sums[1] - 0.2).abs() < 1e-15);
        assert!(sums[2].abs() < 1e-15);
    }

    #[test]
    fn coefficient_json_round_trip_enforces_validity() {
        let c = RebateCoefficients::new(4, vec![0.1, -0.05]).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        let back: RebateCoefficients = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
        let bad = r#"{"n": 4, "c": [-0.1, 0.2]}"#;
        assert!(serde_json::from_str::<RebateCoefficients>(bad).is_err());
    }

    #[test]
    fn rebate_reads_the_right_order_statistics() {
        let c = RebateCoefficients::new(4, vec![0.1, 0.0]).unwrap();
        let b = ordered(&[1.0, 0.8, 0.5, 0.2]);
        assert!((rebate(&c, &b, 0).unwrap() - 0.05).abs() < 1e-15);
        assert!((rebate(&c, &b, 1).unwrap() - 0.05).abs() < 1e-15);
        assert!((rebate(&c, &b, 2).unwrap() - 0.08).abs() < 1e-15);
        assert!((rebate(&c, &b, 3).unwrap() - 0.08).abs() < 1e-15);
        assert!(rebate(&c, &b, 4).is_err());

        let z = RebateCoefficients::zero(4);
        for rank in 0..4 {
            assert_eq!(rebate(&z, &b, rank).unwrap(), 0.0);
        }
    }

    #[test]
    fn rebate_sum_identity() {
        // sum_i r_i = sum_{i=2}^{n-1} c_i * (i*theta_{i+1} + (n-i)*theta_i).
        let c = RebateCoefficients::new(5, vec![0.3, -0.1, 0.05]).unwrap();
        let b = ordered(&[1.0, 0.9, 0.6, 0.4, 0.15]);
        let direct = total_rebate(&c, &b).unwrap();
        let theta = b.theta();
        let n = 5.0;
        let identity: f64 = c
            .c()
            .iter()
            .enumerate()
            .map(|(idx, cj)| {
                let i = (idx + 2) as f64;
                cj * (i * theta[idx + 2] + (n - i) * theta[idx + 1])
            })
            .sum();
        assert!((direct - identity).abs() < 1e-12);
    }

    #[test]
    fn payments_two_equal_bidders_third_silent() {
        let spec = power(0.5);
        let out = payments(&spec, &profile(&[1.0, 1.0, 0.0]), &RebateCoefficients::zero(3)).unwrap();
        let expect = 1.0 - 0.5_f64.sqrt();
        assert!((out.payments[0] - expect).abs() < 1e-12);
        assert!((out.payments[1] - expect).abs() < 1e-12);
        assert!(out.payments[2].abs() < 1e-12);
        let total: f64 = out.payments.iter().sum();
        assert!((total - out.surplus_ps).abs() < 1e-9);
        assert!((out.surplus_ps - (2.0 - 2.0_f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn payments_sum_to_surplus_with_zero_rebates() {
        let spec = power(0.5);
        let out = payments(&spec, &profile(&[1.0, 1.0, 1.0]), &RebateCoefficients::zero(3)).unwrap();
        let total: f64 = out.payments.iter().sum();
        assert!((total - (3.0 * 2.0_f64.sqrt() - 2.0 * 3.0_f64.sqrt())).abs() < 1e-9);
        assert!(out.welfare_sigma_s >= out.surplus_ps && out.surplus_ps >= 0.0);
    }

    #[test]
    fn zero_profile_means_no_money_moves() {
        let spec = power(0.5);
        let out = payments(&spec, &profile(&[0.0, 0.0, 0.0]), &RebateCoefficients::zero(3)).unwrap();
        assert!(out.payments.iter().all(|p| *p == 0.0));
        assert_eq!(out.surplus_ps, 0.0);
        assert_eq!(out.welfare_sigma_s, 0.0);
    }

    #[test]
    fn rebates_scatter_back_to_unsorted_agents() {
        let spec = power(0.5);
        let c = RebateCoefficients::new(4, vec![0.1, 0.0]).unwrap();
        // Agent order scrambled relative to rank order.
        let out = payments(&spec, &profile(&[0.5, 1.0, 0.2, 0.8]), &c).unwrap();
        // Ranks: agent1 (1.0), agent3 (0.8), agent0 (0.5), agent2 (0.2).
        assert!((out.rebates[1] - 0.05).abs() < 1e-15);
        assert!((out.rebates[3] - 0.05).abs() < 1e-15);
        assert!((out.rebates[0] - 0.08).abs() < 1e-15);
        assert!((out.rebates[2] - 0.08).abs() < 1e-15);
        // Net payments drop by exactly the rebate.
        let no_rebate = payments(&spec, &profile(&[0.5, 1.0, 0.2, 0.8]), &RebateCoefficients::zero(4)).unwrap();
        for i in 0..4 {
            assert!((no_rebate.payments[i] - out.payments[i] - out.rebates[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn outcome_serializes_with_stable_field_names() {
        let spec = power(0.5);
        let out = payments(&spec, &profile(&[1.0, 1.0]), &RebateCoefficients::zero(2)).unwrap();
        let json = serde_json::to_value(&out).unwrap();
        for key in ["theta", "allocation", "payments", "rebates", "p_S", "sigma_S"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }

    #[test]
    fn deficit_vanishes_for_an_absent_agent() {
        // Profile e_2 inside n = 4; the zero-bidding agent 3 changes nothing
        // by leaving, and with v(0) = 0 its deficit is exactly 0.
        let spec = power(0.5);
        let q = vp_deficit(&spec, &profile(&[1.0, 1.0, 0.0, 0.0]), 2, |a| 2.0 * a.sqrt()).unwrap();
        assert!(q.abs() < 1e-12);
        let all_zero = vp_deficit(&spec, &profile(&[0.0, 0.0, 0.0]), 0, |a| a.sqrt()).unwrap();
        assert_eq!(all_zero, 0.0);
    }

    #[test]
    fn deficit_at_symmetric_equilibrium_bids() {
        // Four agents with v(a) = 2*sqrt(a) bidding theta = 2 each:
        // q_i = -1 - 3 + 2*sqrt(3), negative as participation requires.
        let spec = power(0.5);
        let theta = profile(&[2.0, 2.0, 2.0, 2.0]);
        for i in 0..4 {
            let q = vp_deficit(&spec, &theta, i, |a| 2.0 * a.sqrt()).unwrap();
            assert!((q - (-0.535_898_384_862_245_6)).abs() < 1e-12);
        }
    }

    #[test]
    fn worst_case_examples() {
        let spec = power(0.5);
        let c3 = RebateCoefficients::zero(3);
        let at_ones = worst_case_ratio(&spec, &c3, &[ordered(&[1.0, 1.0, 1.0])]).unwrap();
        assert!((at_ones.value - oracles::ssvcg_worst_ratio_closed(3, 0.5)).abs() < 1e-9);
        assert_eq!(at_ones.skipped, 0);

        let lone = worst_case_ratio(&spec, &c3, &[ordered(&[1.0, 0.0, 0.0])]).unwrap();
        assert!(lone.value.abs() < 1e-12);
    }

    #[test]
    fn worst_case_skips_zero_welfare_profiles() {
        let spec = power(0.5);
        let c = RebateCoefficients::zero(2);
        let samples = vec![ordered(&[0.0, 0.0]), ordered(&[1.0, 1.0])];
        let wc = worst_case_ratio(&spec, &c, &samples).unwrap();
        assert_eq!(wc.skipped, 1);
        assert_eq!(wc.argmax.theta(), &[1.0, 1.0]);

        let only_zero = vec![ordered(&[0.0, 0.0])];
        assert!(worst_case_ratio(&spec, &c, &only_zero).is_err());
        assert!(worst_case_ratio(&spec, &c, &[]).is_err());
    }

    #[test]
    fn worst_case_picks_max_and_first_tie() {
        let spec = power(0.5);
        let c = RebateCoefficients::zero(3);
        let samples = vec![
            ordered(&[1.0, 0.5, 0.0]),
            ordered(&[1.0, 1.0, 1.0]),
            ordered(&[1.0, 1.0, 1.0]),
        ];
        let wc = worst_case_ratio(&spec, &c, &samples).unwrap();
        assert_eq!(wc.argmax.theta(), &[1.0, 1.0, 1.0]);
        assert!(wc.value > 0.44);
    }

    #[test]
    fn perfect_redistribution_zeroes_the_ratio() {
        // n = 3, sample e_2 = (1,1,0): total rebate c_2*(2*theta_3 + theta_2)
        // = c_2. Choosing c_2 = p_S(e_2) redistributes everything.
        let spec = power(0.5);
        let ps_e2 = 2.0 - 2.0_f64.sqrt();
        let c = RebateCoefficients::new(3, vec![ps_e2]).unwrap();
        let wc = worst_case_ratio(&spec, &c, &[ordered(&[1.0, 1.0, 0.0])]).unwrap();
        assert!(wc.value.abs() < 1e-12);
    }
}
