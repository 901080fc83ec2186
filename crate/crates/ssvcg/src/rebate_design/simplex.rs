//! Dense two-phase simplex with Bland's entering rule.
//!
//! Small and deterministic beats fast here: the rebate programs have a
//! handful of variables, so after transposing to the dual (see
//! `solve_lp_dual`) the tableau stays a few rows tall no matter how many
//! sampled constraints go in. Identical inputs take identical pivot paths,
//! which the test suite relies on.

use std::io::{self, Write};

use crate::error::{Error, Result};

/// Reduced costs above this are treated as optimal.
pub const REDUCED_COST_TOL: f64 = 1e-9;
/// Pivot elements at or below this magnitude are numerically unusable.
pub const PIVOT_MIN: f64 = 1e-11;
/// Hard cap on pivots; Bland's rule cannot cycle, so hitting this means the
/// arithmetic has degraded.
const MAX_PIVOTS: usize = 100_000;
/// Dense tableaus beyond this many entries would thrash memory; callers
/// with tall problems should go through `solve_lp_auto`.
const MAX_TABLEAU_ENTRIES: usize = 200_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
}

#[derive(Clone, Debug)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
    pub sense: Sense,
}

/// min objective'x subject to the rows and per-variable bounds. A lower
/// bound of None means the variable is free.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lower_bounds: Vec<Option<f64>>,
    pub upper_bounds: Vec<Option<f64>>,
}

impl LinearProgram {
    /// Plain-text dump for debugging and sample archiving.
    pub fn dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "num_vars {}", self.num_vars)?;
        let obj: Vec<String> = self.objective.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "objective {}", obj.join(" "))?;
        let bounds: Vec<String> = self
            .lower_bounds
            .iter()
            .zip(&self.upper_bounds)
            .map(|(l, u)| {
                let lo = l.map_or("-inf".to_string(), |v| format!("{v}"));
                let hi = u.map_or("inf".to_string(), |v| format!("{v}"));
                format!("{lo}:{hi}")
            })
            .collect();
        writeln!(out, "bounds {}", bounds.join(" "))?;
        for row in &self.rows {
            let coeffs: Vec<String> = row.coeffs.iter().map(|v| format!("{v}")).collect();
            let sense = match row.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
            };
            writeln!(out, "row {} | {} | {}", coeffs.join(" "), sense, row.rhs)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    /// Optimal point in the original variable space; empty unless Optimal.
    pub x: Vec<f64>,
    /// Objective at `x`; NaN unless Optimal.
    pub value: f64,
    pub status: SolveStatus,
    /// One entry per input row: the reduced cost of that row's slack or
    /// surplus column at optimality (after any internal sign flip needed to
    /// make the right-hand side nonnegative). For a problem whose rows are
    /// all `<=` with nonnegative right-hand sides these are exactly the
    /// nonnegative Lagrange multipliers, which is what the dual recovery in
    /// `solve_lp_dual` consumes.
    pub duals: Vec<f64>,
    pub pivots: usize,
    /// Basic column indices (internal numbering), row-ordered. Stable
    /// across repeated solves of the same input.
    pub basis: Vec<usize>,
}

enum ColMap {
    Shifted { col: usize, lower: f64 },
    Free { pos: usize, neg: usize },
}

struct Tableau {
    ncols: usize,
    m: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    obj: Vec<f64>,
    /// Negative of the current objective value, kept in row-echelon sync.
    obj_rhs: f64,
    basis: Vec<usize>,
    art_start: usize,
    pivots: usize,
    scratch: Vec<f64>,
}

enum RunEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.ncols + c]
    }

    fn pivot(&mut self, r: usize, c: usize) -> Result<()> {
        self.pivots += 1;
        if self.pivots > MAX_PIVOTS {
            return Err(Error::Convergence {
                what: "simplex pivoting",
                iterations: self.pivots,
            });
        }
        let p = self.at(r, c);
        if p.abs() < PIVOT_MIN {
            return Err(Error::PivotInstability {
                pivot: p,
                threshold: PIVOT_MIN,
            });
        }
        let inv = 1.0 / p;
        let (start, end) = (r * self.ncols, (r + 1) * self.ncols);
        for v in &mut self.a[start..end] {
            *v *= inv;
        }
        self.rhs[r] *= inv;
        self.a[start + c] = 1.0;
        self.scratch.copy_from_slice(&self.a[start..end]);
        let piv_rhs = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f == 0.0 {
                continue;
            }
            let rs = i * self.ncols;
            for (v, pv) in self.a[rs..rs + self.ncols].iter_mut().zip(&self.scratch) {
                *v -= f * pv;
            }
            self.a[rs + c] = 0.0;
            self.rhs[i] -= f * piv_rhs;
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&self.scratch) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
            self.obj_rhs -= f * piv_rhs;
        }
        self.basis[r] = c;
        Ok(())
    }

    /// Prices the given cost vector against the current basis.
    fn set_objective(&mut self, cost: &[f64]) {
        self.obj.copy_from_slice(cost);
        self.obj_rhs = 0.0;
        for r in 0..self.m {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                let rs = r * self.ncols;
                for (o, v) in self.obj.iter_mut().zip(&self.a[rs..rs + self.ncols]) {
                    *o -= cb * v;
                }
                self.obj_rhs -= cb * self.rhs[r];
            }
        }
        for r in 0..self.m {
            let b = self.basis[r];
            self.obj[b] = 0.0;
        }
    }

    fn run(&mut self) -> Result<RunEnd> {
        loop {
            // Bland: lowest-index improving column; artificials never enter.
            let mut entering = None;
            for c in 0..self.art_start {
                if self.obj[c] < -REDUCED_COST_TOL {
                    entering = Some(c);
                    break;
                }
            }
            let Some(c) = entering else {
                return Ok(RunEnd::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a_ic = self.at(i, c);
                if a_ic > PIVOT_MIN {
                    let ratio = self.rhs[i] / a_ic;
                    let better = match leave {
                        None => true,
                        Some((bi, best)) => {
                            ratio < best || (ratio == best && self.basis[i] < self.basis[bi])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c)?,
                None => return Ok(RunEnd::Unbounded),
            }
        }
    }

    /// Pivots zero-level artificial variables out of the basis where the row
    /// still has usable structure; rows that are all zero outside the
    /// artificial columns are redundant and stay parked harmlessly.
    fn drive_out_artificials(&mut self) -> Result<()> {
        for r in 0..self.m {
            if self.basis[r] < self.art_start {
                continue;
            }
            let rs = r * self.ncols;
            let mut best: Option<(usize, f64)> = None;
            for c in 0..self.art_start {
                let v = self.a[rs + c].abs();
                if v > PIVOT_MIN && best.map_or(true, |(_, bv)| v > bv) {
                    best = Some((c, v));
                }
            }
            if let Some((c, _)) = best {
                self.pivot(r, c)?;
            }
        }
        Ok(())
    }
}

fn validate(lp: &LinearProgram) -> Result<()> {
    if lp.num_vars == 0 {
        return Err(Error::Domain("program has no variables".into()));
    }
    if lp.objective.len() != lp.num_vars
        || lp.lower_bounds.len() != lp.num_vars
        || lp.upper_bounds.len() != lp.num_vars
    {
        return Err(Error::Domain(
            "objective and bound vectors must match the variable count".into(),
        ));
    }
    if lp.objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("objective coefficients must be finite".into()));
    }
    for (i, row) in lp.rows.iter().enumerate() {
        if row.coeffs.len() != lp.num_vars {
            return Err(Error::Domain(format!(
                "row {i} has {} coefficients, expected {}",
                row.coeffs.len(),
                lp.num_vars
            )));
        }
        if row.coeffs.iter().any(|v| !v.is_finite()) || !row.rhs.is_finite() {
            return Err(Error::Domain(format!("row {i} contains non-finite entries")));
        }
    }
    for j in 0..lp.num_vars {
        if let Some(l) = lp.lower_bounds[j] {
            if !l.is_finite() {
                return Err(Error::Domain(format!(
                    "lower bound of variable {j} must be finite or absent"
                )));
            }
        }
        if let Some(u) = lp.upper_bounds[j] {
            if !u.is_finite() {
                return Err(Error::Domain(format!(
                    "upper bound of variable {j} must be finite or absent"
                )));
            }
        }
    }
    Ok(())
}

/// Two-phase primal simplex on a dense tableau. Suitable when the tableau
/// (rows x columns after slacks) stays modest; `solve_lp_auto` transposes
/// tall problems instead of calling this directly on them.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    validate(lp)?;

    let mut mapping = Vec::with_capacity(lp.num_vars);
    let mut nstruct = 0usize;
    for j in 0..lp.num_vars {
        match lp.lower_bounds[j] {
            Some(l) => {
                mapping.push(ColMap::Shifted { col: nstruct, lower: l });
                nstruct += 1;
            }
            None => {
                mapping.push(ColMap::Free { pos: nstruct, neg: nstruct + 1 });
                nstruct += 2;
            }
        }
    }

    let map_row = |coeffs: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; nstruct];
        let mut shift = 0.0;
        for (j, &v) in coeffs.iter().enumerate() {
            match mapping[j] {
                ColMap::Shifted { col, lower } => {
                    out[col] = v;
                    shift += v * lower;
                }
                ColMap::Free { pos, neg } => {
                    out[pos] = v;
                    out[neg] = -v;
                }
            }
        }
        (out, shift)
    };

    struct Planned {
        coeffs: Vec<f64>,
        rhs: f64,
        plus_slack: bool,
    }

    let mut planned = Vec::with_capacity(lp.rows.len() + lp.num_vars);
    let mut plan = |coeffs: Vec<f64>, rhs: f64, sense: Sense| {
        let flip = rhs < 0.0 || (rhs == 0.0 && sense == Sense::Ge);
        let (coeffs, rhs) = if flip {
            (coeffs.into_iter().map(|v| -v).collect(), -rhs)
        } else {
            (coeffs, rhs)
        };
        let plus_slack = match (sense, flip) {
            (Sense::Le, false) | (Sense::Ge, true) => true,
            (Sense::Le, true) | (Sense::Ge, false) => false,
        };
        planned.push(Planned { coeffs, rhs, plus_slack });
    };

    for row in &lp.rows {
        let (coeffs, shift) = map_row(&row.coeffs);
        plan(coeffs, row.rhs - shift, row.sense);
    }
    for j in 0..lp.num_vars {
        if let Some(u) = lp.upper_bounds[j] {
            let mut unit = vec![0.0; lp.num_vars];
            unit[j] = 1.0;
            let (coeffs, shift) = map_row(&unit);
            plan(coeffs, u - shift, Sense::Le);
        }
    }

    let m = planned.len();
    let n_art = planned.iter().filter(|p| !p.plus_slack).count();
    let ncols = nstruct + m + n_art;
    if m.saturating_mul(ncols) > MAX_TABLEAU_ENTRIES {
        return Err(Error::Domain(format!(
            "dense tableau of {m} rows x {ncols} columns is too large"
        )));
    }

    let mut tab = Tableau {
        ncols,
        m,
        a: vec![0.0; m * ncols],
        rhs: vec![0.0; m],
        obj: vec![0.0; ncols],
        obj_rhs: 0.0,
        basis: vec![0; m],
        art_start: nstruct + m,
        pivots: 0,
        scratch: vec![0.0; ncols],
    };

    let mut next_art = tab.art_start;
    for (r, p) in planned.iter().enumerate() {
        let rs = r * ncols;
        tab.a[rs..rs + nstruct].copy_from_slice(&p.coeffs);
        let slack_col = nstruct + r;
        tab.a[rs + slack_col] = if p.plus_slack { 1.0 } else { -1.0 };
        tab.rhs[r] = p.rhs;
        if p.plus_slack {
            tab.basis[r] = slack_col;
        } else {
            tab.a[rs + next_art] = 1.0;
            tab.basis[r] = next_art;
            next_art += 1;
        }
    }

    if n_art > 0 {
        let mut phase1 = vec![0.0; ncols];
        for c in tab.art_start..ncols {
            phase1[c] = 1.0;
        }
        tab.set_objective(&phase1);
        match tab.run()? {
            RunEnd::Optimal => {}
            RunEnd::Unbounded => {
                return Err(Error::LpVerification(
                    "feasibility phase reported an unbounded objective".into(),
                ))
            }
        }
        let residual = -tab.obj_rhs;
        let feas_tol = 1e-7 * (1.0 + tab.rhs.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        if residual > feas_tol {
            return Ok(LpSolution {
                x: Vec::new(),
                value: f64::NAN,
                status: SolveStatus::Infeasible,
                duals: Vec::new(),
                pivots: tab.pivots,
                basis: Vec::new(),
            });
        }
        tab.drive_out_artificials()?;
    }

    let mut cost = vec![0.0; ncols];
    for (j, &c_j) in lp.objective.iter().enumerate() {
        match mapping[j] {
            ColMap::Shifted { col, .. } => cost[col] = c_j,
            ColMap::Free { pos, neg } => {
                cost[pos] = c_j;
                cost[neg] = -c_j;
            }
        }
    }
    tab.set_objective(&cost);
    match tab.run()? {
        RunEnd::Optimal => {}
        RunEnd::Unbounded => {
            return Ok(LpSolution {
                x: Vec::new(),
                value: f64::NAN,
                status: SolveStatus::Unbounded,
                duals: Vec::new(),
                pivots: tab.pivots,
                basis: Vec::new(),
            });
        }
    }

    let mut col_val = vec![0.0; ncols];
    for r in 0..m {
        col_val[tab.basis[r]] = tab.rhs[r];
    }
    let x: Vec<f64> = (0..lp.num_vars)
        .map(|j| match mapping[j] {
            ColMap::Shifted { col, lower } => col_val[col] + lower,
            ColMap::Free { pos, neg } => col_val[pos] - col_val[neg],
        })
        .collect();
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals: Vec<f64> = (0..lp.rows.len()).map(|i| tab.obj[nstruct + i]).collect();

    Ok(LpSolution {
        x,
        value,
        status: SolveStatus::Optimal,
        duals,
        pivots: tab.pivots,
        basis: tab.basis,
    })
}

/// Largest constraint or bound violation of `x`, zero when feasible.
pub fn max_violation(lp: &LinearProgram, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (j, &v) in x.iter().enumerate() {
        if let Some(l) = lp.lower_bounds[j] {
            worst = worst.max(l - v);
        }
        if let Some(u) = lp.upper_bounds[j] {
            worst = worst.max(v - u);
        }
    }
    for row in &lp.rows {
        let lhs: f64 = row.coeffs.iter().zip(x).map(|(c, v)| c * v).sum();
        let gap = match row.sense {
            Sense::Le => lhs - row.rhs,
            Sense::Ge => row.rhs - lhs,
        };
        worst = worst.max(gap);
    }
    worst
}

fn dual_eligible(lp: &LinearProgram) -> bool {
    lp.num_vars > 0
        && lp.lower_bounds.iter().all(|l| *l == Some(0.0))
        && lp.objective.iter().all(|c| *c >= 0.0)
}

/// Solves a tall problem by transposition: for min c'z, Gz >= h, z >= 0 the
/// transposed program max h'y, G'y <= c, y >= 0 has one row per original
/// variable, so the dense tableau stays shallow. The original solution is
/// read back from the reduced costs of the transposed slack columns and then
/// re-verified against the original constraints; a mismatch is reported as
/// an error rather than returned silently.
pub fn solve_lp_dual(lp: &LinearProgram) -> Result<LpSolution> {
    validate(lp)?;
    if !dual_eligible(lp) {
        return Err(Error::Domain(
            "transposed solve needs zero lower bounds and a nonnegative objective".into(),
        ));
    }

    // Canonical rows Gz >= h: flip <= rows, turn upper bounds into rows.
    let mut g_rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(lp.rows.len() + lp.num_vars);
    for row in &lp.rows {
        match row.sense {
            Sense::Ge => g_rows.push((row.coeffs.clone(), row.rhs)),
            Sense::Le => g_rows.push((row.coeffs.iter().map(|v| -v).collect(), -row.rhs)),
        }
    }
    for j in 0..lp.num_vars {
        if let Some(u) = lp.upper_bounds[j] {
            let mut unit = vec![0.0; lp.num_vars];
            unit[j] = -1.0;
            g_rows.push((unit, -u));
        }
    }
    let m = g_rows.len();
    if m == 0 {
        return Err(Error::Domain("transposed solve needs at least one row".into()));
    }

    let dual = LinearProgram {
        num_vars: m,
        objective: g_rows.iter().map(|(_, h)| -h).collect(),
        rows: (0..lp.num_vars)
            .map(|j| LpRow {
                coeffs: g_rows.iter().map(|(co, _)| co[j]).collect(),
                rhs: lp.objective[j],
                sense: Sense::Le,
            })
            .collect(),
        lower_bounds: vec![Some(0.0); m],
        upper_bounds: vec![None; m],
    };

    let dsol = solve_lp(&dual)?;
    match dsol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => {
            // Unbounded transpose certifies an infeasible original.
            return Ok(LpSolution {
                x: Vec::new(),
                value: f64::NAN,
                status: SolveStatus::Infeasible,
                duals: Vec::new(),
                pivots: dsol.pivots,
                basis: Vec::new(),
            });
        }
        SolveStatus::Infeasible => {
            return Err(Error::LpVerification(
                "transposed program infeasible; original is unbounded or degenerate".into(),
            ))
        }
    }

    let x: Vec<f64> = (0..lp.num_vars).map(|j| dsol.duals[j].max(0.0)).collect();
    let value = -dsol.value;
    let objective: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let scale = 1.0 + value.abs();
    let residual = max_violation(lp, &x);
    if residual > 1e-6 * scale {
        return Err(Error::LpVerification(format!(
            "recovered point violates constraints by {residual}"
        )));
    }
    if (objective - value).abs() > 1e-6 * scale {
        return Err(Error::LpVerification(format!(
            "recovered objective {objective} disagrees with transposed optimum {value}"
        )));
    }

    Ok(LpSolution {
        x,
        value: objective,
        status: SolveStatus::Optimal,
        duals: dsol.x[..lp.rows.len()].to_vec(),
        pivots: dsol.pivots,
        basis: dsol.basis,
    })
}

/// Picks the solve path by shape: problems with many more rows than
/// variables (and the sign structure the transposition needs) go through
/// `solve_lp_dual`. Returns the solution and whether the transposed path
/// ran.
pub fn solve_lp_auto(lp: &LinearProgram) -> Result<(LpSolution, bool)> {
    if dual_eligible(lp) && lp.rows.len() > 50 * lp.num_vars {
        Ok((solve_lp_dual(lp)?, true))
    } else {
        Ok((solve_lp(lp)?, false))
    }
}
