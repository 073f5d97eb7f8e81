//! A small dense linear-programming engine.
//!
//! Minimizes `c'x` subject to rows `a'x {<=,=,>=} b` and per-variable
//! bounds `l <= x <= u`. Bounds default to `[0, BIG]`. The solver is a
//! two-phase primal simplex on a dense tableau with bounded-variable
//! pivoting: nonbasic variables sit at one of their bounds, the ratio test
//! allows bound flips, and Dantzig pricing falls back to Bland's rule when
//! pivots stall, which rules out cycling.
//!
//! The engine exists to host the station subproblem relaxations, which are
//! small (a few hundred variables at most), so a dense tableau is the
//! right trade-off. There is no sparse storage, no revised simplex, and no
//! warm starting.
//!
//! For debugging, [`LinearProgram::dump`] renders the program in a
//! line-oriented text form: the objective first, then one constraint per
//! line, then any non-default bounds.

use thiserror::Error;

/// Default upper bound for variables without an explicit one.
pub const BIG: f64 = 1e9;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const RESIDUAL_LIMIT: f64 = 1e-5;
const DEGENERATE_STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, Error)]
pub enum LpError {
    #[error("row {row} has {got} coefficients, program has {expected} variables")]
    ShapeMismatch {
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("variable {var} has lower bound {lower} above upper bound {upper}")]
    BadBounds { var: usize, lower: f64, upper: f64 },
    #[error("residual {residual:.3e} on row {row} exceeds the stability limit {RESIDUAL_LIMIT:.0e}")]
    NumericallyUnstable { row: usize, residual: f64 },
    #[error("simplex iteration limit reached ({0} pivots)")]
    IterationLimit(usize),
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Minimization objective, one coefficient per variable.
    pub objective: Vec<f64>,
    /// Constraint rows: coefficients, relation, right-hand side.
    pub rows: Vec<(Vec<f64>, Relation, f64)>,
    /// Per-variable `[lower, upper]`.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `num_vars` variables with zero objective and
    /// default bounds `[0, BIG]`.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            rows: Vec::new(),
            bounds: vec![(0.0, BIG); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.rows.push((coeffs, relation, rhs));
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    /// Line-oriented text rendering: objective, one constraint per line,
    /// then bounds that differ from the default.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let term = |coeffs: &[f64]| {
            coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(j, c)| format!("{c} x{j}"))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        let _ = writeln!(out, "min: {}", term(&self.objective));
        for (i, (coeffs, rel, rhs)) in self.rows.iter().enumerate() {
            let _ = writeln!(out, "r{i}: {} {} {rhs}", term(coeffs), rel.symbol());
        }
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            if (*lo, *hi) != (0.0, BIG) {
                let _ = writeln!(out, "x{j} in [{lo}, {hi}]");
            }
        }
        out
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        for (i, (coeffs, _, _)) in self.rows.iter().enumerate() {
            if coeffs.len() != n {
                return Err(LpError::ShapeMismatch {
                    row: i,
                    got: coeffs.len(),
                    expected: n,
                });
            }
        }
        for (j, (lo, hi)) in self.bounds.iter().enumerate() {
            // Fully free variables are unsupported: every column needs a
            // finite bound to start from.
            if lo > hi || lo.is_nan() || hi.is_nan() || (!lo.is_finite() && !hi.is_finite()) {
                return Err(LpError::BadBounds {
                    var: j,
                    lower: *lo,
                    upper: *hi,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural variable values (meaningful when `status == Optimal`).
    pub values: Vec<f64>,
    pub objective_value: f64,
    /// Human-readable notes, e.g. a variable ending on the default BIG bound.
    pub diagnostics: Vec<String>,
}

/// Solve a bounded-variable linear program.
///
/// `Infeasible` and `Unbounded` come back as a status, not an error.
/// Errors are reserved for malformed programs and numerical failure
/// (final residuals beyond `1e-5`).
pub fn solve_lp(program: &LinearProgram) -> Result<LpSolution, LpError> {
    program.validate()?;
    let mut tableau = Tableau::build(program);

    if !tableau.phase_one()? {
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            values: Vec::new(),
            objective_value: f64::INFINITY,
            diagnostics: Vec::new(),
        });
    }
    if !tableau.phase_two(&program.objective)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            values: Vec::new(),
            objective_value: f64::NEG_INFINITY,
            diagnostics: Vec::new(),
        });
    }

    let values = tableau.structural_values();
    check_residuals(program, &values)?;

    let objective_value = program
        .objective
        .iter()
        .zip(&values)
        .map(|(c, x)| c * x)
        .sum();
    let mut diagnostics = Vec::new();
    for (j, x) in values.iter().enumerate() {
        if program.bounds[j].1 == BIG && (x - BIG).abs() <= 1e-3 {
            diagnostics.push(format!(
                "variable x{j} sits on the default upper bound {BIG:.0e}; the program is likely missing a constraint"
            ));
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        values,
        objective_value,
        diagnostics,
    })
}

fn check_residuals(program: &LinearProgram, x: &[f64]) -> Result<(), LpError> {
    for (i, (coeffs, rel, rhs)) in program.rows.iter().enumerate() {
        let lhs: f64 = coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let scale = 1.0 + rhs.abs().max(lhs.abs());
        let violation = match rel {
            Relation::Le => lhs - rhs,
            Relation::Ge => rhs - lhs,
            Relation::Eq => (lhs - rhs).abs(),
        };
        if violation > RESIDUAL_LIMIT * scale {
            return Err(LpError::NumericallyUnstable {
                row: i,
                residual: violation,
            });
        }
    }
    Ok(())
}

/// Dense simplex working state. Columns are ordered: structural variables,
/// one slack/surplus per inequality row, one artificial per row.
struct Tableau {
    /// m x ncols coefficient matrix, updated in place by pivots.
    a: Vec<Vec<f64>>,
    /// Objective row (reduced costs after elimination), length ncols.
    z: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Column basic in each row.
    basic: Vec<usize>,
    in_basis: Vec<bool>,
    /// For nonbasic columns: sitting at upper bound (else lower).
    at_upper: Vec<bool>,
    /// Values of basic variables, row-aligned.
    xb: Vec<f64>,
    /// First artificial column index; artificials never re-enter pricing.
    art_start: usize,
    n_structural: usize,
    /// Total pivots taken, for diagnostics.
    pivots: usize,
}

enum RunOutcome {
    Optimal,
    Unbounded,
    CapExceeded,
}

impl Tableau {
    fn build(program: &LinearProgram) -> Tableau {
        let n = program.num_vars();
        let m = program.rows.len();
        let n_slack = program
            .rows
            .iter()
            .filter(|(_, rel, _)| *rel != Relation::Eq)
            .count();
        let ncols = n + n_slack + m;
        let art_start = n + n_slack;

        let mut a = vec![vec![0.0; ncols]; m];
        let mut lower = vec![0.0; ncols];
        let mut upper = vec![f64::INFINITY; ncols];
        for j in 0..n {
            lower[j] = program.bounds[j].0;
            upper[j] = program.bounds[j].1;
        }

        // Nonbasic structurals start at a finite bound, preferring lower.
        let mut at_upper = vec![false; ncols];
        for j in 0..n {
            if !lower[j].is_finite() {
                at_upper[j] = upper[j].is_finite();
            }
        }

        let mut slack_idx = n;
        for (i, (coeffs, rel, _)) in program.rows.iter().enumerate() {
            a[i][..n].copy_from_slice(coeffs);
            match rel {
                Relation::Le => {
                    a[i][slack_idx] = 1.0;
                    slack_idx += 1;
                }
                Relation::Ge => {
                    a[i][slack_idx] = -1.0;
                    slack_idx += 1;
                }
                Relation::Eq => {}
            }
        }

        // Start from the all-artificial basis: artificial i absorbs the
        // residual of row i at the initial nonbasic point. Rows with a
        // negative residual are negated wholesale so every basic column
        // starts normalized to +1, which the pivot logic relies on.
        let mut basic = Vec::with_capacity(m);
        let mut xb = Vec::with_capacity(m);
        let mut in_basis = vec![false; ncols];
        for (i, (coeffs, _, rhs)) in program.rows.iter().enumerate() {
            let mut residual = *rhs;
            for j in 0..n {
                let v = if at_upper[j] { upper[j] } else { lower[j] };
                residual -= coeffs[j] * v;
            }
            if residual < 0.0 {
                for v in a[i][..art_start].iter_mut() {
                    *v = -*v;
                }
            }
            // Slack columns start nonbasic at 0 (their lower bound).
            let col = art_start + i;
            a[i][col] = 1.0;
            basic.push(col);
            in_basis[col] = true;
            xb.push(residual.abs());
        }

        Tableau {
            a,
            z: vec![0.0; ncols],
            lower,
            upper,
            basic,
            in_basis,
            at_upper,
            xb,
            art_start,
            n_structural: n,
            pivots: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.z.len()
    }

    /// Load an objective over the columns and eliminate the basic ones so
    /// `z` holds reduced costs.
    fn load_objective(&mut self, cost: &[f64]) {
        self.z.iter_mut().for_each(|v| *v = 0.0);
        self.z[..cost.len()].copy_from_slice(cost);
        for (row, &col) in self.basic.clone().iter().enumerate() {
            let factor = self.z[col];
            if factor != 0.0 {
                for j in 0..self.ncols() {
                    self.z[j] -= factor * self.a[row][j];
                }
                self.z[col] = 0.0;
            }
        }
    }

    /// Minimize the sum of artificial variables. Returns false when the
    /// program is infeasible.
    fn phase_one(&mut self) -> Result<bool, LpError> {
        let mut cost = vec![0.0; self.ncols()];
        for j in self.art_start..self.ncols() {
            cost[j] = 1.0;
        }
        self.load_objective(&cost);
        // Artificials are eligible columns in phase 1. The phase-1
        // objective is bounded below by zero, so an unbounded ray can only
        // arise from accumulated rounding; surface that as instability.
        match self.iterate(false) {
            RunOutcome::Optimal => {}
            RunOutcome::Unbounded | RunOutcome::CapExceeded => {
                return Err(LpError::IterationLimit(self.pivots));
            }
        }

        let infeasibility: f64 = self
            .basic
            .iter()
            .zip(&self.xb)
            .filter(|(col, _)| **col >= self.art_start)
            .map(|(_, v)| v.abs())
            .sum();
        if infeasibility > FEAS_TOL {
            return Ok(false);
        }

        // Pin artificials to zero. Basic ones stay at value zero; pinning
        // their bounds keeps any later degenerate pivot from moving them.
        for j in self.art_start..self.ncols() {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
            if !self.in_basis[j] {
                self.at_upper[j] = false;
            }
        }
        Ok(true)
    }

    /// Minimize the real objective. Returns false when unbounded.
    fn phase_two(&mut self, objective: &[f64]) -> Result<bool, LpError> {
        self.load_objective(objective);
        match self.iterate(true) {
            RunOutcome::Optimal => Ok(true),
            RunOutcome::Unbounded => Ok(false),
            RunOutcome::CapExceeded => Err(LpError::IterationLimit(self.pivots)),
        }
    }

    /// Run simplex pivots until optimality (no eligible entering column).
    fn iterate(&mut self, forbid_artificials: bool) -> RunOutcome {
        let mut stalled = 0usize;
        let mut bland = false;
        // Generous safety cap; Bland's rule guarantees finite termination,
        // so hitting the cap signals a numerical problem, not a slow run.
        let cap = 20_000 + 200 * (self.ncols() + self.a.len());
        for _ in 0..cap {
            let enter = match self.price(bland, forbid_artificials) {
                Some(j) => j,
                None => return RunOutcome::Optimal,
            };
            self.pivots += 1;
            let step = match self.step(enter) {
                Ok(t) => t,
                Err(Unbounded) => return RunOutcome::Unbounded,
            };
            if step > 1e-12 {
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= DEGENERATE_STALL_LIMIT {
                    bland = true;
                }
            }
        }
        RunOutcome::CapExceeded
    }

    /// Pick an entering column, or None at optimality.
    fn price(&self, bland: bool, forbid_artificials: bool) -> Option<usize> {
        let limit = if forbid_artificials {
            self.art_start
        } else {
            self.ncols()
        };
        let mut best: Option<(usize, f64)> = None;
        for j in 0..limit {
            if self.in_basis[j] || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = self.z[j];
            let improving = if self.at_upper[j] { d > COST_TOL } else { d < -COST_TOL };
            if !improving {
                continue;
            }
            if bland {
                return Some(j);
            }
            let score = d.abs();
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Move the entering variable as far as its own span and the basic
    /// bounds allow; flip or pivot. Returns the step length taken.
    fn step(&mut self, enter: usize) -> Result<f64, Unbounded> {
        let dir = if self.at_upper[enter] { -1.0 } else { 1.0 };
        let span = self.upper[enter] - self.lower[enter];

        // Blocking basic variable: smallest step, ties to the smallest
        // basic column index (keeps runs deterministic and satisfies
        // Bland's anti-cycling requirements).
        let mut t_limit = span;
        let mut leave: Option<(usize, bool)> = None; // (row, leaves at upper)
        for (i, &col) in self.basic.iter().enumerate() {
            let delta = -dir * self.a[i][enter]; // basic change per unit step
            if delta > PIVOT_TOL {
                let room = self.upper[col] - self.xb[i];
                if room.is_finite() {
                    let t = (room / delta).max(0.0);
                    if t < t_limit - 1e-12
                        || (t < t_limit + 1e-12
                            && leave.map_or(false, |(r, _)| col < self.basic[r]))
                    {
                        t_limit = t;
                        leave = Some((i, true));
                    }
                }
            } else if delta < -PIVOT_TOL {
                let room = self.xb[i] - self.lower[col];
                if room.is_finite() {
                    let t = (room / -delta).max(0.0);
                    if t < t_limit - 1e-12
                        || (t < t_limit + 1e-12
                            && leave.map_or(false, |(r, _)| col < self.basic[r]))
                    {
                        t_limit = t;
                        leave = Some((i, false));
                    }
                }
            }
        }

        if t_limit.is_infinite() {
            return Err(Unbounded);
        }

        match leave {
            None => {
                // Bound flip: the entering variable crosses to its other
                // bound without any basis change.
                for i in 0..self.basic.len() {
                    self.xb[i] -= dir * t_limit * self.a[i][enter];
                }
                self.at_upper[enter] = !self.at_upper[enter];
                Ok(t_limit)
            }
            Some((row, leaves_at_upper)) => {
                let enter_start = if self.at_upper[enter] {
                    self.upper[enter]
                } else {
                    self.lower[enter]
                };
                let enter_value = enter_start + dir * t_limit;
                for i in 0..self.basic.len() {
                    if i != row {
                        self.xb[i] -= dir * t_limit * self.a[i][enter];
                    }
                }
                let leaving = self.basic[row];
                self.in_basis[leaving] = false;
                self.at_upper[leaving] = leaves_at_upper;

                self.pivot(row, enter);
                self.basic[row] = enter;
                self.in_basis[enter] = true;
                self.xb[row] = enter_value;
                Ok(t_limit)
            }
        }
    }

    /// Gaussian pivot on (row, col) applied to the matrix and the
    /// objective row.
    fn pivot(&mut self, row: usize, col: usize) {
        let pivot = self.a[row][col];
        let inv = 1.0 / pivot;
        for v in self.a[row].iter_mut() {
            *v *= inv;
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
                r[col] = 0.0;
            }
        }
        let factor = self.z[col];
        if factor != 0.0 {
            for (v, p) in self.z.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            self.z[col] = 0.0;
        }
    }

    fn structural_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.n_structural];
        for j in 0..self.n_structural {
            if !self.in_basis[j] {
                x[j] = if self.at_upper[j] {
                    self.upper[j]
                } else {
                    self.lower[j]
                };
            }
        }
        for (i, &col) in self.basic.iter().enumerate() {
            if col < self.n_structural {
                x[col] = self.xb[i];
            }
        }
        x
    }
}

struct Unbounded;
