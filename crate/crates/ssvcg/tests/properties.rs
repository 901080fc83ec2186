//! Randomized invariants across the pipeline: algebraic identities of the
//! rebate form, analytic properties of welfare and surplus, cover
//! correctness, and consistency between the sampled program and direct
//! simulation of the mechanism.

use proptest::prelude::*;

use ssvcg::allocation::{efficient_allocation, BidProfile, OrderedProfile};
use ssvcg::mechanism::{clarke_surplus, surrogate_welfare, total_rebate, worst_case_ratio};
use ssvcg::oracles;
use ssvcg::rebate_design::{
    alpha_coefficients, c_to_x, constraint_gap, optimize_rebates_with_samples, x_to_c, XVariables,
};
use ssvcg::sampling::{
    ek_profiles, epsilon_cover, random_f_face_samples, random_ordered_samples, CoverConfig,
    CoverMode,
};
use ssvcg::surrogate::SurrogateSpec;

fn power(alpha: f64) -> SurrogateSpec {
    SurrogateSpec::power_law(alpha).unwrap()
}

/// Profiles pinned to theta_1 = 1 with the rest descending in [0, 1].
fn descending(n: usize) -> impl Strategy<Value = OrderedProfile> {
    prop::collection::vec(0.0..1.0f64, n - 1).prop_map(move |mut rest| {
        rest.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut theta = vec![1.0];
        theta.extend(rest);
        OrderedProfile::new(theta).unwrap()
    })
}

/// Unnormalized profiles with at least one strictly positive bid.
fn any_profile(n: usize) -> impl Strategy<Value = BidProfile> {
    prop::collection::vec(0.0..4.0f64, n)
        .prop_filter("needs a positive bid", |v| v.iter().any(|t| *t > 1e-6))
        .prop_map(|v| BidProfile::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rebate_sum_matches_order_statistic_identity(
        (n, x, p) in (3usize..8)
            .prop_flat_map(|n| (Just(n), prop::collection::vec(0.0..1.0f64, n - 2), descending(n)))
    ) {
        let c = x_to_c(n, &XVariables { x, t: 0.0 }).unwrap();
        let direct = total_rebate(&c, &p).unwrap();
        let alpha = alpha_coefficients(&p);
        let via_alpha: f64 = c.c().iter().zip(&alpha).map(|(ci, a)| ci * a).sum();
        prop_assert!((direct - via_alpha).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn cumulative_conversion_round_trips(
        (n, x) in (2usize..9)
            .prop_flat_map(|n| (Just(n), prop::collection::vec(0.0..1.0f64, n - 2)))
    ) {
        let xv = XVariables { x: x.clone(), t: 0.5 };
        let c = x_to_c(n, &xv).unwrap();
        let back = c_to_x(&c, 0.5);
        for (orig, rebuilt) in x.iter().zip(&back.x) {
            prop_assert!((orig - rebuilt).abs() <= 1e-12);
        }
    }

    #[test]
    fn welfare_homogeneous_and_surplus_scale_decay(
        (p, lam) in (any_profile(5), 0.1..3.0f64)
    ) {
        let spec = power(0.5);
        let sigma = surrogate_welfare(&spec, &p).unwrap();
        let ps = clarke_surplus(&spec, &p).unwrap();
        let scaled = BidProfile::new(p.theta().iter().map(|t| lam * t).collect()).unwrap();
        let sigma_l = surrogate_welfare(&spec, &scaled).unwrap();
        let ps_l = clarke_surplus(&spec, &scaled).unwrap();

        prop_assert!((sigma_l - lam * sigma).abs() <= 1e-9 * (1.0 + sigma.abs()));
        // Surplus per unit of scale never grows with the scale.
        if lam >= 1.0 {
            prop_assert!(ps_l / lam <= ps + 1e-9);
        } else {
            prop_assert!(ps_l / lam >= ps - 1e-9);
        }
        prop_assert!(ps >= -1e-12 && ps <= sigma + 1e-9);
    }

    #[test]
    fn surplus_monotone_in_each_coordinate(
        (p, idx, bump) in (any_profile(5), 0usize..5, 0.0..2.0f64)
    ) {
        let spec = power(0.5);
        let base = clarke_surplus(&spec, &p).unwrap();
        let mut up = p.theta().to_vec();
        up[idx] += bump;
        let raised = clarke_surplus(&spec, &BidProfile::new(up).unwrap()).unwrap();
        prop_assert!(raised >= base - 1e-9);
    }

    #[test]
    fn welfare_and_surplus_are_lipschitz(
        (a, b) in (any_profile(6), any_profile(6))
    ) {
        let spec = power(0.5);
        let n = 6.0f64;
        let dist: f64 = a
            .theta()
            .iter()
            .zip(b.theta())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let ds = (surrogate_welfare(&spec, &a).unwrap() - surrogate_welfare(&spec, &b).unwrap()).abs();
        let dp = (clarke_surplus(&spec, &a).unwrap() - clarke_surplus(&spec, &b).unwrap()).abs();
        prop_assert!(ds <= n.sqrt() * dist + 1e-9);
        prop_assert!(dp <= 2.0 * n * n.sqrt() * dist + 1e-9);
    }

    #[test]
    fn custom_curve_route_agrees_with_closed_forms(
        (_n, alpha, p) in (2usize..10)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    prop_oneof![Just(0.25), Just(0.5), Just(0.75)],
                    descending(n),
                )
            })
    ) {
        // The same curve fed through the generic bisection path must agree
        // with the closed-form power-law route.
        let custom = SurrogateSpec::custom(
            move |a: f64| if a <= 0.0 { 0.0 } else { a.powf(1.0 - alpha) },
            move |a: f64| (1.0 - alpha) * a.powf(-alpha),
        );
        let direct = power(alpha);
        let bid = p.profile();
        let shares_custom = efficient_allocation(&custom, bid).unwrap();
        let shares_direct = efficient_allocation(&direct, bid).unwrap();
        for (u, v) in shares_custom.shares.iter().zip(&shares_direct.shares) {
            prop_assert!((u - v).abs() <= 1e-8);
        }
        let ps_custom = clarke_surplus(&custom, bid).unwrap();
        prop_assert!((ps_custom - oracles::ps_closed(p.theta(), alpha)).abs() <= 1e-8);
        let sigma_custom = surrogate_welfare(&custom, bid).unwrap();
        prop_assert!((sigma_custom - oracles::sigma_closed(p.theta(), alpha)).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn covers_are_within_radius_of_everything(
        (n, eps, point) in (2usize..5)
            .prop_flat_map(|n| {
                (
                    Just(n),
                    0.15..0.5f64,
                    prop::collection::vec(0.0..1.0f64, n - 1),
                )
            })
    ) {
        let cover = epsilon_cover(&CoverConfig::new(n, eps, CoverMode::WFace)).unwrap();
        let mut sorted = point.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut target = vec![1.0];
        target.extend(sorted);
        let nearest = cover
            .iter()
            .map(|p| {
                p.theta()
                    .iter()
                    .zip(&target)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(nearest <= eps + 1e-9, "nearest = {nearest}, eps = {eps}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn sampled_programs_stay_consistent_with_simulation(
        (n, seed) in (3usize..6, 0u64..10_000)
    ) {
        let spec = power(0.5);
        let mut w = ek_profiles(n);
        w.extend(random_ordered_samples(n, 120, seed).unwrap());
        let mut f: Vec<OrderedProfile> = ek_profiles(n).into_iter().skip(1).collect();
        f.extend(random_f_face_samples(n, 120, seed).unwrap());

        let design = optimize_rebates_with_samples(&spec, n, &f, &w, true).unwrap();

        // Doing nothing is always feasible, so the optimum cannot exceed
        // the no-rebate worst ratio.
        prop_assert!(design.t <= oracles::ssvcg_worst_ratio_closed(n, 0.5) + 1e-9);
        prop_assert!(design.t >= -1e-12);

        let witness = XVariables { x: vec![0.0; n - 2], t: 1.0 };
        for b in f.iter().chain(&w) {
            prop_assert!(constraint_gap(&spec, &witness, b).unwrap() <= 1e-10);
        }

        // The certified bound is exactly the worst simulated ratio over the
        // training samples.
        let wc = worst_case_ratio(&spec, &design.c, &w).unwrap();
        prop_assert!((wc.value - design.t).abs() <= 1e-9);

        // Fresh samples can only push the maximum up.
        let mut extended = w.clone();
        extended.extend(random_ordered_samples(n, 200, seed + 1).unwrap());
        let wc_ext = worst_case_ratio(&spec, &design.c, &extended).unwrap();
        prop_assert!(wc_ext.value >= design.t - 1e-9);

        // Refining the sample set only tightens what must be satisfied, so
        // the optimum over a subset is no larger.
        let half_w = &w[..w.len() / 2];
        let half_f = &f[..f.len() / 2];
        let smaller = optimize_rebates_with_samples(&spec, n, half_f, half_w, false).unwrap();
        prop_assert!(smaller.t <= design.t + 1e-9);
    }
}
