//! Choosing rebate coefficients by linear programming.
//!
//! Scale invariance and an exchange argument reduce the search for
//! worst-case-optimal linear rebates to a program over the cumulative
//! coefficients x_i = c_2 + ... + c_i plus the worst-ratio bound t:
//!
//!   minimize t
//!   s.t.  sum_i x_i d_i(theta) <= p_S(theta)                  (budget rows)
//!         sum_i x_i d_i(theta) + t sigma_S(theta) >= p_S(theta)  (ratio rows)
//!         x >= 0, 0 <= t <= 1
//!
//! where d_i comes from differencing the order-statistic weights in
//! `alpha_coefficients`. Both row families are sampled: budget rows on the
//! face theta_1 = theta_2 = 1, ratio rows on theta_1 = 1, which is where
//! each constraint binds after normalization. The x >= 0 constraint is the
//! voluntary-participation condition on partial sums carried over from
//! `RebateCoefficients`.

pub mod simplex;

use serde::Serialize;

pub use simplex::{
    max_violation, solve_lp, solve_lp_auto, solve_lp_dual, LinearProgram, LpRow, LpSolution,
    Sense, SolveStatus,
};

use crate::allocation::{BidProfile, OrderedProfile};
use crate::error::{Error, Result};
use crate::mechanism::{clarke_surplus, surplus_and_welfare, RebateCoefficients};
use crate::par;
use crate::sampling::{
    ek_profiles, epsilon_cover, random_f_face_samples, random_ordered_samples, CoverConfig,
    CoverMode,
};
use crate::surrogate::SurrogateSpec;

/// Gap above which a constraint counts as violated when auditing a solution
/// on fresh samples.
pub const VIOLATION_TOL: f64 = 1e-10;

/// Cumulative rebate coefficients plus the worst-ratio bound: the decision
/// variables of the program.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct XVariables {
    /// x_i = c_2 + ... + c_i for i = 2..n-1; empty when n = 2.
    pub x: Vec<f64>,
    /// Upper bound on the retained surplus ratio.
    pub t: f64,
}

/// Order-statistic weights of the rebate sum: with bids sorted descending,
///   sum_i r_i = sum_{i=2}^{n-1} c_i (i b_{i+1} + (n-i) b_i),
/// returned as the vector (alpha_2, ..., alpha_{n-1}, 0) of length n-1. The
/// trailing zero is the weight of the absent c_n term, kept so differencing
/// yields exactly the n-2 loads the program needs.
pub fn alpha_coefficients(b: &OrderedProfile) -> Vec<f64> {
    let n = b.n();
    let theta = b.theta();
    let nf = n as f64;
    let mut alpha = Vec::with_capacity(n - 1);
    for i in 2..n {
        let i_f = i as f64;
        alpha.push(i_f * theta[i] + (nf - i_f) * theta[i - 1]);
    }
    alpha.push(0.0);
    alpha
}

/// First differences of the alpha weights; nonnegative on descending
/// profiles, which is what makes the cumulative reparameterization sound.
fn load_coefficients(b: &OrderedProfile) -> Vec<f64> {
    let alpha = alpha_coefficients(b);
    alpha.windows(2).map(|w| w[0] - w[1]).collect()
}

fn check_dims(xv: &XVariables, b: &OrderedProfile) -> Result<()> {
    if xv.x.len() + 2 != b.n() {
        return Err(Error::Domain(format!(
            "{} cumulative coefficients do not fit a profile of {} agents",
            xv.x.len(),
            b.n()
        )));
    }
    Ok(())
}

fn paid_out(xv: &XVariables, b: &OrderedProfile) -> f64 {
    xv.x
        .iter()
        .zip(load_coefficients(b))
        .map(|(x, d)| x * d)
        .sum()
}

/// Budget slack: total rebate minus collectable surplus at this profile.
/// Nonpositive means the rebate never overdraws the payments.
pub fn feasibility_gap(spec: &SurrogateSpec, xv: &XVariables, b: &OrderedProfile) -> Result<f64> {
    check_dims(xv, b)?;
    let (ps, _) = surplus_and_welfare(spec, b.theta())?;
    Ok(paid_out(xv, b) - ps)
}

/// Ratio slack: retained surplus minus t times welfare. Nonpositive means
/// the profile keeps the worst-case ratio at or below t.
pub fn ratio_gap(spec: &SurrogateSpec, xv: &XVariables, b: &OrderedProfile) -> Result<f64> {
    check_dims(xv, b)?;
    let (ps, sigma) = surplus_and_welfare(spec, b.theta())?;
    Ok(ps - paid_out(xv, b) - xv.t * sigma)
}

/// Worst of the two slacks; the joint constraint a candidate point must
/// satisfy at every profile.
pub fn constraint_gap(spec: &SurrogateSpec, xv: &XVariables, b: &OrderedProfile) -> Result<f64> {
    Ok(feasibility_gap(spec, xv, b)?.max(ratio_gap(spec, xv, b)?))
}

/// Cumulative form of a coefficient vector, paired with a ratio bound.
pub fn c_to_x(c: &RebateCoefficients, t: f64) -> XVariables {
    XVariables {
        x: c.partial_sums(),
        t,
    }
}

/// Differences the cumulative form back into coefficients, revalidating the
/// voluntary-participation sums on the way.
pub fn x_to_c(n: usize, xv: &XVariables) -> Result<RebateCoefficients> {
    if xv.x.len() + 2 != n {
        return Err(Error::Domain(format!(
            "expected {} cumulative coefficients for n = {n}, got {}",
            n - 2,
            xv.x.len()
        )));
    }
    let mut c = Vec::with_capacity(xv.x.len());
    let mut prev = 0.0;
    for &x in &xv.x {
        c.push(x - prev);
        prev = x;
    }
    RebateCoefficients::new(n, c)
}

/// Assembles the sampled program: one budget row per feasibility-face
/// sample, one ratio row per worst-face sample, in that order. Variables
/// are (x_2, ..., x_{n-1}, t) with x >= 0 and t in [0, 1].
pub fn build_scp(
    spec: &SurrogateSpec,
    n: usize,
    f_samples: &[OrderedProfile],
    w_samples: &[OrderedProfile],
) -> Result<LinearProgram> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 agents, got {n}")));
    }
    if w_samples.is_empty() {
        return Err(Error::EmptySamples("no worst-face samples for the ratio rows"));
    }
    if let Some(bad) = f_samples
        .iter()
        .chain(w_samples.iter())
        .find(|b| b.n() != n)
    {
        return Err(Error::Domain(format!(
            "sample with {} agents in a program for {n}",
            bad.n()
        )));
    }
    let nv = n - 1;

    let f_rows: Vec<Result<LpRow>> = par::map_slice(f_samples, |b| {
        let mut coeffs = load_coefficients(b);
        coeffs.push(0.0);
        let (ps, _) = surplus_and_welfare(spec, b.theta())?;
        Ok(LpRow {
            coeffs,
            rhs: ps,
            sense: Sense::Le,
        })
    });
    let w_rows: Vec<Result<LpRow>> = par::map_slice(w_samples, |b| {
        let mut coeffs = load_coefficients(b);
        let (ps, sigma) = surplus_and_welfare(spec, b.theta())?;
        coeffs.push(sigma);
        Ok(LpRow {
            coeffs,
            rhs: ps,
            sense: Sense::Ge,
        })
    });

    let mut rows = Vec::with_capacity(f_rows.len() + w_rows.len());
    for row in f_rows {
        rows.push(row?);
    }
    for row in w_rows {
        rows.push(row?);
    }

    let mut objective = vec![0.0; nv];
    objective[nv - 1] = 1.0;
    let mut upper = vec![None; nv];
    upper[nv - 1] = Some(1.0);

    Ok(LinearProgram {
        num_vars: nv,
        objective,
        rows,
        lower_bounds: vec![Some(0.0); nv],
        upper_bounds: upper,
    })
}

/// How the training samples for `optimize_rebates` are drawn.
#[derive(Clone, Debug)]
pub struct SamplingConfig {
    /// Random profiles per face.
    pub train_count: usize,
    pub seed: u64,
    /// Include the extreme profiles e_1..e_n; they pin the binding
    /// constraints and should stay on unless deliberately stress-testing.
    pub include_extremes: bool,
    /// Also add a deterministic cover of this radius on each face.
    pub cover_epsilon: Option<f64>,
    /// Give every sample both a budget row and a ratio row instead of one
    /// row for its own face.
    pub combined_g: bool,
}

impl SamplingConfig {
    pub fn default_for(n: usize, seed: u64) -> Self {
        SamplingConfig {
            train_count: 5000 * n,
            seed,
            include_extremes: true,
            cover_epsilon: None,
            combined_g: false,
        }
    }
}

/// Draws the two sample families (feasibility face, worst face) for a run.
pub fn assemble_samples(
    n: usize,
    cfg: &SamplingConfig,
) -> Result<(Vec<OrderedProfile>, Vec<OrderedProfile>)> {
    let mut w = Vec::new();
    if cfg.include_extremes {
        w.extend(ek_profiles(n));
    }
    w.extend(random_ordered_samples(n, cfg.train_count, cfg.seed)?);
    if let Some(eps) = cfg.cover_epsilon {
        w.extend(epsilon_cover(&CoverConfig::new(n, eps, CoverMode::WFace))?);
    }

    let mut f = Vec::new();
    if cfg.include_extremes {
        // e_1 lies off the feasibility face; the rest sit on it.
        f.extend(ek_profiles(n).into_iter().skip(1));
    }
    f.extend(random_f_face_samples(n, cfg.train_count, cfg.seed)?);
    if let Some(eps) = cfg.cover_epsilon {
        f.extend(epsilon_cover(&CoverConfig::new(n, eps, CoverMode::FFace))?);
    }

    if cfg.combined_g {
        let extra_f = w.clone();
        let extra_w = f.clone();
        f.extend(extra_f);
        w.extend(extra_w);
    }
    Ok((f, w))
}

#[derive(Clone, Debug, Serialize)]
pub struct LpStats {
    pub rows: usize,
    pub vars: usize,
    pub pivots: usize,
    pub dual_path: bool,
    pub status: String,
}

/// A solved design: coefficients, the certified bound on the retained
/// ratio over the training set, and solver diagnostics.
#[derive(Clone, Debug)]
pub struct RebateDesign {
    pub c: RebateCoefficients,
    pub t: f64,
    pub x: XVariables,
    pub lp_stats: LpStats,
}

/// End-to-end: draw samples, build the program, solve, convert back to
/// coefficients.
pub fn optimize_rebates(
    spec: &SurrogateSpec,
    n: usize,
    cfg: &SamplingConfig,
) -> Result<RebateDesign> {
    let (f, w) = assemble_samples(n, cfg)?;
    optimize_rebates_with_samples(spec, n, &f, &w, cfg.include_extremes)
}

/// The solve step on caller-supplied samples. `extremes_included` should be
/// true only when the worst-face samples contain e_2..e_n; it turns on the
/// invariant check that every cumulative coefficient stays at or below the
/// surplus at the all-ones profile, which those rows enforce exactly.
pub fn optimize_rebates_with_samples(
    spec: &SurrogateSpec,
    n: usize,
    f_samples: &[OrderedProfile],
    w_samples: &[OrderedProfile],
    extremes_included: bool,
) -> Result<RebateDesign> {
    let lp = build_scp(spec, n, f_samples, w_samples)?;
    let (sol, dual_path) = solve_lp_auto(&lp)?;
    let lp_stats = LpStats {
        rows: lp.rows.len(),
        vars: lp.num_vars,
        pivots: sol.pivots,
        dual_path,
        status: format!("{:?}", sol.status),
    };
    if sol.status != SolveStatus::Optimal {
        return Err(Error::LpVerification(format!(
            "rebate program ended {:?}; it should always be feasible and bounded",
            sol.status
        )));
    }
    let nv = lp.num_vars;
    let xv = XVariables {
        x: sol.x[..nv - 1].to_vec(),
        t: sol.x[nv - 1],
    };
    if extremes_included {
        let bn = clarke_surplus(spec, &BidProfile::new(vec![1.0; n])?)?;
        for (i, &xi) in xv.x.iter().enumerate() {
            if xi > bn + 1e-6 {
                return Err(Error::LpVerification(format!(
                    "cumulative coefficient x_{} = {xi} exceeds the all-ones surplus {bn}",
                    i + 2
                )));
            }
        }
    }
    let c = x_to_c(n, &xv)?;
    Ok(RebateDesign {
        c,
        t: xv.t,
        x: xv,
        lp_stats,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ViolationEstimate {
    pub violations: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Fraction of fresh samples where the candidate point breaks its face's
/// constraint by more than `VIOLATION_TOL`.
pub fn estimate_violation(
    spec: &SurrogateSpec,
    xv: &XVariables,
    f_samples: &[OrderedProfile],
    w_samples: &[OrderedProfile],
) -> Result<ViolationEstimate> {
    let total = f_samples.len() + w_samples.len();
    if total == 0 {
        return Err(Error::EmptySamples("no samples to audit against"));
    }
    let f_gaps: Vec<Result<f64>> = par::map_slice(f_samples, |b| feasibility_gap(spec, xv, b));
    let w_gaps: Vec<Result<f64>> = par::map_slice(w_samples, |b| ratio_gap(spec, xv, b));
    let mut violations = 0usize;
    for gap in f_gaps.into_iter().chain(w_gaps) {
        if gap? > VIOLATION_TOL {
            violations += 1;
        }
    }
    Ok(ViolationEstimate {
        violations,
        total,
        fraction: violations as f64 / total as f64,
    })
}
