//! The announced utility curve that all bids scale.
//!
//! Every agent's reported valuation is `theta * U(a)` where `U` is a fixed,
//! strictly increasing, strictly concave curve with `U(0) = 0`. The built-in
//! family is the power law `U(a) = a^(1-alpha)`; arbitrary curves can be
//! plugged in as closures and audited with [`check_assumptions`].

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type Curve = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A marginal utility value. The power-law marginal diverges at 0, so the
/// query at 0 returns a tagged sentinel rather than a floating-point
/// infinity that could leak into arithmetic; callers branch on it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Marginal {
    Finite(f64),
    Infinite,
}

impl Marginal {
    pub fn is_infinite(self) -> bool {
        matches!(self, Marginal::Infinite)
    }

    /// The finite value, if there is one.
    pub fn finite(self) -> Option<f64> {
        match self {
            Marginal::Finite(v) => Some(v),
            Marginal::Infinite => None,
        }
    }

    /// True when this marginal exceeds the threshold `z`.
    pub fn exceeds(self, z: f64) -> bool {
        match self {
            Marginal::Finite(v) => v > z,
            Marginal::Infinite => true,
        }
    }
}

/// The announced curve. Immutable after construction; safe to share across
/// threads.
#[derive(Clone)]
pub enum SurrogateSpec {
    /// `U(a) = a^(1-alpha)` with `alpha` in (0,1).
    PowerLaw { alpha: f64 },
    /// Caller-supplied curve and marginal, both on [0,1]. Conformance
    /// (U(0)=0, strict increase, strict concavity) is the caller's burden;
    /// [`check_assumptions`] audits it on a grid.
    Custom { u: Curve, u_prime: Curve },
}

impl fmt::Debug for SurrogateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurrogateSpec::PowerLaw { alpha } => {
                f.debug_struct("PowerLaw").field("alpha", alpha).finish()
            }
            SurrogateSpec::Custom { .. } => f.write_str("Custom { .. }"),
        }
    }
}

impl SurrogateSpec {
    pub fn power_law(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!(
                "power-law exponent alpha must lie in (0,1), got {alpha}"
            )));
        }
        Ok(SurrogateSpec::PowerLaw { alpha })
    }

    pub fn custom(
        u: impl Fn(f64) -> f64 + Send + Sync + 'static,
        u_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        SurrogateSpec::Custom {
            u: Arc::new(u),
            u_prime: Arc::new(u_prime),
        }
    }

    /// The power-law exponent, if this is the built-in family.
    pub fn alpha(&self) -> Option<f64> {
        match self {
            SurrogateSpec::PowerLaw { alpha } => Some(*alpha),
            SurrogateSpec::Custom { .. } => None,
        }
    }

    /// Parses `{"kind": "power_law", "alpha": 0.5}`. Custom curves are
    /// closures and cannot come from config files.
    pub fn from_json_value(v: &serde_json::Value) -> Result<Self> {
        let parse_err = |detail: String| Error::Parse {
            what: "surrogate config",
            detail,
        };
        let obj = v
            .as_object()
            .ok_or_else(|| parse_err("expected a JSON object".into()))?;
        let kind = obj
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| parse_err("missing string field \"kind\"".into()))?;
        match kind {
            "power_law" => {
                let alpha = obj
                    .get("alpha")
                    .and_then(|a| a.as_f64())
                    .ok_or_else(|| parse_err("power_law needs a numeric \"alpha\"".into()))?;
                SurrogateSpec::power_law(alpha)
            }
            other => Err(parse_err(format!(
                "unknown kind {other:?}; only \"power_law\" is configurable"
            ))),
        }
    }
}

/// `U(a)` for `a` in [0,1].
pub fn u_value(spec: &SurrogateSpec, a: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&a), "allocation share out of range: {a}");
    match spec {
        SurrogateSpec::PowerLaw { alpha } => {
            if a == 0.0 {
                0.0
            } else {
                a.powf(1.0 - alpha)
            }
        }
        SurrogateSpec::Custom { u, .. } => u(a),
    }
}

/// `U'(a)`; [`Marginal::Infinite`] at `a = 0` when the curve is unbounded
/// there (always, for the power law).
pub fn u_derivative(spec: &SurrogateSpec, a: f64) -> Marginal {
    debug_assert!((0.0..=1.0).contains(&a), "allocation share out of range: {a}");
    match spec {
        SurrogateSpec::PowerLaw { alpha } => {
            if a == 0.0 {
                Marginal::Infinite
            } else {
                Marginal::Finite((1.0 - alpha) * a.powf(-alpha))
            }
        }
        SurrogateSpec::Custom { u_prime, .. } => {
            let v = u_prime(a);
            if v.is_finite() {
                Marginal::Finite(v)
            } else {
                Marginal::Infinite
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct AssumptionViolation {
    /// Which check failed: "zero_at_origin", "strictly_increasing",
    /// "strictly_concave".
    pub check: &'static str,
    /// Grid point where the failure was observed.
    pub at: f64,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub passed: bool,
    pub violations: Vec<AssumptionViolation>,
}

/// Audits `U(0) = 0`, strict increase, and strict concavity on a uniform
/// grid of `grid_size` points over [0,1]. A grid audit cannot prove the
/// assumptions, only catch violations; the built-in family satisfies them
/// by construction.
pub fn check_assumptions(spec: &SurrogateSpec, grid_size: usize) -> Result<AssumptionReport> {
    if grid_size < 3 {
        return Err(Error::Domain(format!(
            "assumption audit needs at least 3 grid points, got {grid_size}"
        )));
    }
    let step = 1.0 / (grid_size - 1) as f64;
    let values: Vec<f64> = (0..grid_size)
        .map(|k| u_value(spec, (k as f64 * step).min(1.0)))
        .collect();

    let mut violations = Vec::new();
    if values[0].abs() > 1e-12 {
        violations.push(AssumptionViolation {
            check: "zero_at_origin",
            at: 0.0,
            detail: format!("U(0) = {}, expected 0", values[0]),
        });
    }
    for k in 0..grid_size - 1 {
        let d = values[k + 1] - values[k];
        if d <= 0.0 {
            violations.push(AssumptionViolation {
                check: "strictly_increasing",
                at: k as f64 * step,
                detail: format!("first difference {d} at grid index {k}"),
            });
        }
    }
    for k in 0..grid_size - 2 {
        let d2 = values[k + 2] - 2.0 * values[k + 1] + values[k];
        if d2 >= 0.0 {
            violations.push(AssumptionViolation {
                check: "strictly_concave",
                at: k as f64 * step,
                detail: format!("second difference {d2} at grid index {k}"),
            });
        }
    }
    Ok(AssumptionReport {
        passed: violations.is_empty(),
        violations,
    })
}
