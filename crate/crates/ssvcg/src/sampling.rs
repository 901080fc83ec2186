//! Bid-profile generators and sample-size helpers for the rebate program.
//!
//! The surplus ratio is scale invariant, so every generator pins the top
//! bid to 1 and only the remaining coordinates vary. Random profiles feed
//! the sampled program; epsilon covers give a deterministic alternative with
//! an a-priori accuracy bound; `calafiore_campi_count` sizes a random sample
//! for a target violation probability.

use std::io::{self, Write};

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Serialize;

use crate::allocation::{BidProfile, OrderedProfile};
use crate::error::{Error, Result};
use crate::mechanism::clarke_surplus;
use crate::surrogate::{u_value, SurrogateSpec};

/// Default ceiling on epsilon-cover size before erroring out.
pub const DEFAULT_COVER_CAP: usize = 2_000_000;

/// Threshold used when deciding whether a grid value has reached 1.
const GRID_END_TOL: f64 = 1e-12;

/// Uniform draw in [0, 1) using the top 53 bits of the generator word, so
/// streams stay reproducible across generator crate versions.
pub(crate) fn unit_uniform(rng: &mut ChaCha12Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Profiles with theta_1 = 1 and theta_2..theta_n drawn iid uniform on
/// [0, 1], sorted descending. Deterministic in `seed`; uses its own stream
/// so it never overlaps with `random_f_face_samples` at the same seed.
pub fn random_ordered_samples(n: usize, count: usize, seed: u64) -> Result<Vec<OrderedProfile>> {
    random_face_samples(n, count, seed, 1)
}

/// Profiles with theta_1 = theta_2 = 1 and the rest iid uniform sorted
/// descending. Empty for n = 2, where the face is the single point (1, 1)
/// and carries no free coordinate.
pub fn random_f_face_samples(n: usize, count: usize, seed: u64) -> Result<Vec<OrderedProfile>> {
    if n == 2 {
        return Ok(Vec::new());
    }
    random_face_samples(n, count, seed, 2)
}

fn random_face_samples(
    n: usize,
    count: usize,
    seed: u64,
    fixed: usize,
) -> Result<Vec<OrderedProfile>> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 agents, got {n}")));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    // Streams keep the two faces independent under one seed.
    rng.set_stream(fixed as u64 - 1);
    let free = n - fixed;
    let mut out = Vec::with_capacity(count);
    let mut draw = vec![0.0; free];
    for _ in 0..count {
        for slot in draw.iter_mut() {
            *slot = unit_uniform(&mut rng);
        }
        draw.sort_unstable_by(|a, b| b.partial_cmp(a).expect("uniforms are finite"));
        let mut theta = Vec::with_capacity(n);
        theta.extend(std::iter::repeat(1.0).take(fixed));
        theta.extend_from_slice(&draw);
        out.push(OrderedProfile::new_unchecked(theta));
    }
    Ok(out)
}

/// The profiles e_k = (1, ..., 1, 0, ..., 0) with k ones, k = 1..n. These
/// are the extreme points where the surplus ratio and the rebate bounds are
/// attained, so sampled programs should always include them.
pub fn ek_profiles(n: usize) -> Vec<OrderedProfile> {
    (1..=n)
        .map(|k| {
            let mut theta = vec![0.0; n];
            theta[..k].fill(1.0);
            OrderedProfile::new_unchecked(theta)
        })
        .collect()
}

/// Which face of the (scale-normalized) profile space a cover lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverMode {
    /// theta_1 = theta_2 = 1: the face where rebate feasibility binds.
    FFace,
    /// theta_1 = 1: the face where the worst surplus ratio is attained.
    WFace,
}

#[derive(Clone, Debug)]
pub struct CoverConfig {
    pub n: usize,
    pub epsilon: f64,
    pub mode: CoverMode,
    pub max_points: usize,
}

impl CoverConfig {
    pub fn new(n: usize, epsilon: f64, mode: CoverMode) -> Self {
        CoverConfig {
            n,
            epsilon,
            mode,
            max_points: DEFAULT_COVER_CAP,
        }
    }
}

/// Deterministic epsilon-net of the chosen face in the sup norm: a grid of
/// pitch 2*epsilon/sqrt(d) on each of the d free coordinates, restricted to
/// descending tuples. Every point of the face lies within epsilon
/// (Euclidean) of some returned profile.
pub fn epsilon_cover(cfg: &CoverConfig) -> Result<Vec<OrderedProfile>> {
    if cfg.n < 2 {
        return Err(Error::Domain(format!("need at least 2 agents, got {}", cfg.n)));
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon.is_finite()) {
        return Err(Error::Domain(format!(
            "cover radius must be positive and finite, got {}",
            cfg.epsilon
        )));
    }
    let fixed = match cfg.mode {
        CoverMode::WFace => 1,
        CoverMode::FFace => 2,
    };
    let d = cfg.n - fixed;
    if d == 0 {
        // The face is a single point.
        return Ok(vec![OrderedProfile::new_unchecked(vec![1.0; cfg.n])]);
    }

    let pitch = 2.0 * cfg.epsilon / (d as f64).sqrt();
    let mut values = Vec::new();
    let mut k = 0usize;
    loop {
        let v = k as f64 * pitch;
        if v >= 1.0 - GRID_END_TOL {
            break;
        }
        values.push(v);
        k += 1;
    }
    values.push(1.0);

    let estimated = binomial_saturating((values.len() + d - 1) as u128, d as u128);
    if estimated > cfg.max_points as u128 {
        return Err(Error::CoverTooLarge {
            estimated,
            cap: cfg.max_points,
        });
    }

    let mut out = Vec::with_capacity(estimated as usize);
    let mut tuple = vec![0.0; d];
    emit_descending_tuples(&values, fixed, &mut tuple, 0, values.len() - 1, &mut out);
    Ok(out)
}

/// Recursively fills `tuple` with non-increasing grid values (indices bounded
/// above by `max_idx`) and emits one profile per completed tuple.
fn emit_descending_tuples(
    values: &[f64],
    fixed: usize,
    tuple: &mut Vec<f64>,
    depth: usize,
    max_idx: usize,
    out: &mut Vec<OrderedProfile>,
) {
    if depth == tuple.len() {
        let mut theta = Vec::with_capacity(fixed + tuple.len());
        theta.extend(std::iter::repeat(1.0).take(fixed));
        theta.extend_from_slice(tuple);
        out.push(OrderedProfile::new_unchecked(theta));
        return;
    }
    for idx in (0..=max_idx).rev() {
        tuple[depth] = values[idx];
        emit_descending_tuples(values, fixed, tuple, depth + 1, idx, out);
    }
}

fn binomial_saturating(top: u128, k: u128) -> u128 {
    let mut result: u128 = 1;
    for i in 1..=k {
        let factor = top - k + i;
        result = match result.checked_mul(factor) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    result
}

/// Sample count sufficient for the randomized program: with probability at
/// least 1 - delta over the draw, the solution of a d-variable program built
/// from this many iid samples violates at most an epsilon fraction of the
/// distribution. Natural logarithms throughout.
pub fn calafiore_campi_count(epsilon: f64, delta: f64, d: usize) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "violation level must lie in (0, 1), got {epsilon}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0, 1), got {delta}"
        )));
    }
    if d == 0 {
        return Err(Error::Domain("program must have at least one variable".into()));
    }
    let df = d as f64;
    let m = (2.0 / epsilon) * (df * (2.0 / epsilon).ln() + (1.0 / delta).ln()) + 2.0 * df;
    Ok(m.ceil() as usize)
}

/// Constants controlling how fast cover-based solutions converge: the gap
/// between the exact optimum and the optimum over an epsilon cover is at
/// most `bound_for(epsilon)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TheoryConstants {
    #[serde(rename = "K1")]
    pub k1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "Bn")]
    pub bn: f64,
    #[serde(rename = "K2")]
    pub k2: f64,
    pub gamma: f64,
    #[serde(rename = "K3_inv")]
    pub k3_inv: f64,
}

impl TheoryConstants {
    /// Worst-case optimality gap of a solution computed on an epsilon cover.
    pub fn bound_for(&self, epsilon: f64) -> f64 {
        self.k2 * epsilon / self.k3_inv
    }
}

/// Computes the convergence constants for a given curve and market size.
/// B2 and Bn are the pivotal surplus at the all-ones profiles with 2 and n
/// agents; the rest are norm and conditioning bounds built from them.
pub fn theory_constants(spec: &SurrogateSpec, n: usize) -> Result<TheoryConstants> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 agents, got {n}")));
    }
    let u1 = u_value(spec, 1.0);
    if !(u1 > 0.0 && u1.is_finite()) {
        return Err(Error::Domain(format!(
            "curve value at the full good must be positive, got {u1}"
        )));
    }
    let b2 = 2.0 * u1 - 2.0 * u_value(spec, 0.5);
    let bn = clarke_surplus(spec, &BidProfile::new(vec![1.0; n])?)?;
    if !(bn > 0.0) {
        return Err(Error::Domain(format!(
            "pivotal surplus at the all-ones profile must be positive, got {bn}"
        )));
    }
    let nf = n as f64;
    let k2 = 2.0 * nf * nf * bn + 2.0 * u1 * nf * nf.sqrt() + u1 * nf.sqrt();
    let gamma = (nf + b2 / bn) / u1;
    let k3_inv = u1.min(b2 / (bn * ((nf - 2.0) + gamma * gamma).sqrt()));
    Ok(TheoryConstants {
        k1: 1.0,
        b2,
        bn,
        k2,
        gamma,
        k3_inv,
    })
}

/// Writes profiles as CSV with a `theta_1..theta_n` header. Floats use the
/// shortest representation that round-trips.
pub fn write_profiles_csv<W: Write>(out: &mut W, profiles: &[OrderedProfile]) -> io::Result<()> {
    let Some(first) = profiles.first() else {
        return Ok(());
    };
    let header: Vec<String> = (1..=first.n()).map(|i| format!("theta_{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for p in profiles {
        let row: Vec<String> = p.theta().iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
