//! Dense two-phase tableau simplex.
//!
//! Problems are stated as `maximize c.z` subject to equality rows, `<=` rows
//! and per-variable sign restrictions (nonnegative or free). Free variables
//! are split into positive and negative parts, `<=` rows receive slacks and
//! every row without a ready-made basic column receives an artificial.
//!
//! Pricing is Dantzig's most-negative reduced cost until `bland_after`
//! pivots have been made, then Bland's smallest-index rule, which cannot
//! cycle. The working tableau is rebuilt from the original data every
//! `refactor_every` pivots and before a solution is reported.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub nonneg: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// `maximize objective . z` subject to `eq` (`a.z = rhs`) and `le` (`a.z <= rhs`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpProblem {
    pub variables: Vec<Variable>,
    pub objective: Vec<f64>,
    pub eq: Vec<Constraint>,
    pub le: Vec<Constraint>,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("iteration limit {iterations} reached; basis {basis:?}")]
    IterationLimit {
        iterations: usize,
        basis: Vec<usize>,
    },
    #[error("basis matrix is numerically singular after refactorization (column {column})")]
    SingularBasis { column: usize },
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("tableau text line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl LpProblem {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.objective.len() != n {
            return Err(LpError::Malformed(format!(
                "objective has {} coefficients for {n} variables",
                self.objective.len()
            )));
        }
        for row in self.eq.iter().chain(&self.le) {
            if row.coeffs.len() != n {
                return Err(LpError::Malformed(format!(
                    "row {} has {} coefficients for {n} variables",
                    row.name,
                    row.coeffs.len()
                )));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(LpError::Malformed(format!(
                    "row {} has non-finite data",
                    row.name
                )));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("objective has non-finite data".into()));
        }
        Ok(())
    }

    /// Plain-text dense tableau: a header with dimensions, one line per
    /// variable, the objective, then one line per constraint row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lp-tableau 1");
        let _ = writeln!(
            out,
            "dims {} {} {}",
            self.num_vars(),
            self.eq.len(),
            self.le.len()
        );
        for v in &self.variables {
            let _ = writeln!(
                out,
                "var {} {}",
                v.name,
                if v.nonneg { "nonneg" } else { "free" }
            );
        }
        let join = |xs: &[f64]| {
            xs.iter()
                .map(|c| format!("{c:?}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "obj {}", join(&self.objective));
        for (kind, rows) in [("eq", &self.eq), ("le", &self.le)] {
            for r in rows {
                let _ = writeln!(out, "{kind} {} {:?} : {}", r.name, r.rhs, join(&r.coeffs));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, LpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let err = |line: usize, msg: &str| LpError::Parse {
            line,
            msg: msg.to_string(),
        };
        let num = |line: usize, s: &str| -> Result<f64, LpError> {
            s.parse::<f64>()
                .map_err(|_| err(line, &format!("bad number {s:?}")))
        };

        let (ln, header) = lines.next().ok_or_else(|| err(0, "empty input"))?;
        if header != "lp-tableau 1" {
            return Err(err(ln, "expected header `lp-tableau 1`"));
        }
        let (ln, dims) = lines.next().ok_or_else(|| err(ln, "missing dims line"))?;
        let dims: Vec<&str> = dims.split_whitespace().collect();
        if dims.len() != 4 || dims[0] != "dims" {
            return Err(err(ln, "expected `dims <vars> <eq> <le>`"));
        }
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|_| err(ln, "bad dimension"));
        let (n, n_eq, n_le) = (
            parse_usize(dims[1])?,
            parse_usize(dims[2])?,
            parse_usize(dims[3])?,
        );

        let mut variables = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, l) = lines.next().ok_or_else(|| err(ln, "missing var line"))?;
            let parts: Vec<&str> = l.split_whitespace().collect();
            match parts.as_slice() {
                ["var", name, kind @ ("nonneg" | "free")] => variables.push(Variable {
                    name: name.to_string(),
                    nonneg: *kind == "nonneg",
                }),
                _ => return Err(err(ln, "expected `var <name> nonneg|free`")),
            }
        }
        let (ln, obj) = lines.next().ok_or_else(|| err(ln, "missing obj line"))?;
        let mut parts = obj.split_whitespace();
        if parts.next() != Some("obj") {
            return Err(err(ln, "expected `obj ...`"));
        }
        let objective = parts.map(|s| num(ln, s)).collect::<Result<Vec<_>, _>>()?;

        let mut eq = Vec::with_capacity(n_eq);
        let mut le = Vec::with_capacity(n_le);
        for (ln, l) in lines {
            let (head, coeffs) = l.split_once(':').ok_or_else(|| err(ln, "missing `:`"))?;
            let head: Vec<&str> = head.split_whitespace().collect();
            let [kind, name, rhs] = head.as_slice() else {
                return Err(err(ln, "expected `eq|le <name> <rhs> : ...`"));
            };
            let row = Constraint {
                name: name.to_string(),
                rhs: num(ln, rhs)?,
                coeffs: coeffs
                    .split_whitespace()
                    .map(|s| num(ln, s))
                    .collect::<Result<_, _>>()?,
            };
            match *kind {
                "eq" => eq.push(row),
                "le" => le.push(row),
                _ => return Err(err(ln, "row kind must be eq or le")),
            }
        }
        if eq.len() != n_eq || le.len() != n_le {
            return Err(err(0, "row counts do not match dims"));
        }
        let problem = LpProblem {
            variables,
            objective,
            eq,
            le,
        };
        problem.validate()?;
        Ok(problem)
    }
}

/// Rule for choosing the entering column before the switch to Bland's rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pricing {
    /// Most negative reduced cost.
    Dantzig,
    /// Most negative reduced cost per unit length of the edge direction,
    /// `d_j / sqrt(1 + |B^-1 a_j|^2)`, computed exactly from the tableau.
    SteepestEdge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub pricing: Pricing,
    pub pivot_tol: f64,
    /// Reduced costs above `-opt_tol` count as optimal.
    pub opt_tol: f64,
    pub bland_after: usize,
    pub max_iters: usize,
    pub refactor_every: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            pricing: Pricing::SteepestEdge,
            pivot_tol: 1e-9,
            opt_tol: 1e-9,
            bland_after: 2000,
            max_iters: 100_000,
            refactor_every: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub max_residual: f64,
    /// Final basis in standard-form column indices, one per kept row.
    pub basis: Vec<usize>,
    /// `(row, entering column)` for every pivot, in order.
    pub pivots: Vec<(usize, usize)>,
    /// Objective after each phase-two pivot.
    pub phase_two_objectives: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_eq_residual: f64,
    pub max_ineq_violation: f64,
    pub max_negativity: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.max_eq_residual
            .max(self.max_ineq_violation)
            .max(self.max_negativity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Constraint residuals of `values`, computed straight from the problem data.
pub fn check_solution(problem: &LpProblem, values: &[f64]) -> ResidualReport {
    let dot = |a: &[f64]| a.iter().zip(values).map(|(a, z)| a * z).sum::<f64>();
    let max_eq_residual = problem
        .eq
        .iter()
        .map(|r| (dot(&r.coeffs) - r.rhs).abs())
        .fold(0.0, f64::max);
    let max_ineq_violation = problem
        .le
        .iter()
        .map(|r| (dot(&r.coeffs) - r.rhs).max(0.0))
        .fold(0.0, f64::max);
    let max_negativity = problem
        .variables
        .iter()
        .zip(values)
        .filter(|(v, _)| v.nonneg)
        .map(|(_, &z)| (-z).max(0.0))
        .fold(0.0, f64::max);
    ResidualReport {
        max_eq_residual,
        max_ineq_violation,
        max_negativity,
    }
}

pub fn solve(problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let mut tab = Tableau::new(problem);
    tab.run(problem, options)
}

// Primal feasibility tolerance used by the ratio test.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Column {
    Positive(usize),
    Negative(usize),
    Slack,
    /// Artificial for the given original row.
    Artificial(usize),
}

impl Column {
    fn is_artificial(self) -> bool {
        matches!(self, Column::Artificial(_))
    }
}

struct Tableau {
    /// Standard-form data, one row per constraint (eq rows first).
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    kinds: Vec<Column>,
    cost: Vec<f64>,
    /// Working rows: `B^-1 [A | b]` restricted to rows still in play.
    rows: Vec<Vec<f64>>,
    /// Original row index behind each working row.
    row_origin: Vec<usize>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
    enterable: Vec<bool>,
    pivots: Vec<(usize, usize)>,
    phase_two_objectives: Vec<f64>,
    since_refactor: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn new(problem: &LpProblem) -> Self {
        let n = problem.num_vars();
        let mut kinds = Vec::new();
        let mut cost = Vec::new();
        let mut var_cols = Vec::with_capacity(n);
        for (j, v) in problem.variables.iter().enumerate() {
            let pos = kinds.len();
            kinds.push(Column::Positive(j));
            cost.push(problem.objective[j]);
            let neg = if v.nonneg {
                None
            } else {
                kinds.push(Column::Negative(j));
                cost.push(-problem.objective[j]);
                Some(kinds.len() - 1)
            };
            var_cols.push((pos, neg));
        }
        let n_eq = problem.eq.len();
        let m = n_eq + problem.le.len();
        let slack_start = kinds.len();
        for _ in &problem.le {
            kinds.push(Column::Slack);
            cost.push(0.0);
        }

        // rows are flipped so every rhs is nonnegative
        let mut a = Vec::with_capacity(m);
        let mut b = Vec::with_capacity(m);
        let mut needs_artificial = Vec::with_capacity(m);
        for (i, row) in problem.eq.iter().chain(&problem.le).enumerate() {
            let sign = if row.rhs < 0.0 { -1.0 } else { 1.0 };
            let mut r = vec![0.0; kinds.len()];
            for (j, &c) in row.coeffs.iter().enumerate() {
                let (pos, neg) = var_cols[j];
                r[pos] = sign * c;
                if let Some(neg) = neg {
                    r[neg] = -sign * c;
                }
            }
            if i >= n_eq {
                r[slack_start + i - n_eq] = sign;
            }
            a.push(r);
            b.push(sign * row.rhs);
            needs_artificial.push(i < n_eq || sign < 0.0);
        }
        let mut basis = Vec::with_capacity(m);
        let n_art = needs_artificial.iter().filter(|&&x| x).count();
        let total = kinds.len() + n_art;
        for (i, r) in a.iter_mut().enumerate() {
            r.resize(total, 0.0);
            if needs_artificial[i] {
                let col = kinds.len();
                kinds.push(Column::Artificial(i));
                cost.push(0.0);
                r[col] = 1.0;
                basis.push(col);
            } else {
                basis.push(slack_start + i - n_eq);
            }
        }
        let rows = a
            .iter()
            .zip(&b)
            .map(|(r, &rhs)| {
                let mut w = r.clone();
                w.push(rhs);
                w
            })
            .collect();
        Tableau {
            row_origin: (0..m).collect(),
            enterable: vec![true; kinds.len()],
            reduced: vec![0.0; kinds.len() + 1],
            a,
            b,
            kinds,
            cost,
            rows,
            basis,
            pivots: Vec::new(),
            phase_two_objectives: Vec::new(),
            since_refactor: 0,
        }
    }

    fn ncols(&self) -> usize {
        self.kinds.len()
    }

    fn rhs(&self, r: usize) -> f64 {
        self.rows[r][self.ncols()]
    }

    fn price(&mut self, cost: &[f64]) {
        let n = self.ncols();
        let mut reduced: Vec<f64> = cost.iter().map(|c| -c).collect();
        reduced.push(0.0);
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (d, t) in reduced.iter_mut().zip(&self.rows[r]) {
                    *d += cb * t;
                }
            }
        }
        for &bv in &self.basis {
            reduced[bv] = 0.0;
        }
        debug_assert_eq!(reduced.len(), n + 1);
        self.reduced = reduced;
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let n = self.ncols();
        let p = self.rows[r][e];
        let pivot_row: Vec<f64> = self.rows[r].iter().map(|t| t / p).collect();
        let support: Vec<usize> = (0..=n).filter(|&j| pivot_row[j] != 0.0).collect();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                for &j in &support {
                    row[j] -= f * pivot_row[j];
                }
                row[e] = 0.0;
            }
        }
        let f = self.reduced[e];
        if f != 0.0 {
            for &j in &support {
                self.reduced[j] -= f * pivot_row[j];
            }
            self.reduced[e] = 0.0;
        }
        self.rows[r] = pivot_row;
        self.rows[r][e] = 1.0;
        self.basis[r] = e;
        self.pivots.push((r, e));
        self.since_refactor += 1;
    }

    /// Rebuilds the working rows as `B^-1 [A | b]` from the original data
    /// using Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.basis.len();
        let n = self.ncols();
        // [B | A | b] for the kept rows
        let mut work: Vec<Vec<f64>> = self
            .row_origin
            .iter()
            .map(|&o| {
                let mut w = Vec::with_capacity(m + n + 1);
                w.extend(self.basis.iter().map(|&bv| self.a[o][bv]));
                w.extend_from_slice(&self.a[o]);
                w.push(self.b[o]);
                w
            })
            .collect();
        for k in 0..m {
            let (piv, best) = (k..m)
                .map(|i| (i, work[i][k].abs()))
                .fold((k, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best < 1e-11 {
                return Err(LpError::SingularBasis {
                    column: self.basis[k],
                });
            }
            work.swap(k, piv);
            let p = work[k][k];
            work[k].iter_mut().for_each(|t| *t /= p);
            let pivot_row = work[k].clone();
            let support: Vec<usize> = (0..pivot_row.len())
                .filter(|&j| pivot_row[j] != 0.0)
                .collect();
            for (i, row) in work.iter_mut().enumerate() {
                if i == k {
                    continue;
                }
                let f = row[k];
                if f != 0.0 {
                    for &j in &support {
                        row[j] -= f * pivot_row[j];
                    }
                }
            }
        }
        // row k now expresses basis[k]; row_origin is only used as a set
        self.rows = work.into_iter().map(|w| w[m..].to_vec()).collect();
        for (k, &bv) in self.basis.iter().enumerate() {
            for (i, row) in self.rows.iter_mut().enumerate() {
                row[bv] = if i == k { 1.0 } else { 0.0 };
            }
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn choose_entering(&self, rule: Option<Pricing>, opt_tol: f64) -> Option<usize> {
        let n = self.ncols();
        let candidates: Vec<usize> = (0..n)
            .filter(|&j| self.enterable[j] && self.reduced[j] < -opt_tol)
            .collect();
        let score: Vec<f64> = match rule {
            None => return candidates.first().copied(),
            Some(Pricing::Dantzig) => candidates.iter().map(|&j| self.reduced[j]).collect(),
            Some(Pricing::SteepestEdge) => {
                let mut norms = vec![1.0; candidates.len()];
                for row in &self.rows {
                    for (k, &j) in candidates.iter().enumerate() {
                        norms[k] += row[j] * row[j];
                    }
                }
                candidates
                    .iter()
                    .zip(&norms)
                    .map(|(&j, w)| -(self.reduced[j] * self.reduced[j]) / w)
                    .collect()
            }
        };
        candidates
            .iter()
            .zip(&score)
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(b.0)))
            .map(|(&j, _)| j)
    }

    /// Two-pass Harris ratio test: the step is bounded using rhs values
    /// relaxed by `FEAS_TOL`, then the largest pivot within that bound wins.
    fn choose_leaving(&self, e: usize, bland: bool, pivot_tol: f64) -> Option<usize> {
        let col_max = self.rows.iter().fold(0.0_f64, |m, row| m.max(row[e].abs()));
        let tol = pivot_tol.max(1e-11 * col_max);
        let bound = self
            .rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row[e] > tol)
            .map(|(r, row)| (self.rhs(r).max(0.0) + FEAS_TOL) / row[e])
            .fold(f64::INFINITY, f64::min);
        if !bound.is_finite() {
            return None;
        }
        let mut best: Option<usize> = None;
        for (r, row) in self.rows.iter().enumerate() {
            let t = row[e];
            if t <= tol || self.rhs(r).max(0.0) / t > bound {
                continue;
            }
            best = match best {
                None => Some(r),
                Some(br) => {
                    let better = if bland {
                        self.basis[r] < self.basis[br]
                    } else {
                        t > self.rows[br][e]
                    };
                    Some(if better { r } else { br })
                }
            };
        }
        best
    }

    fn iterate(
        &mut self,
        cost: &[f64],
        options: &SolveOptions,
        iterations: &mut usize,
        phase_two: bool,
    ) -> Result<PhaseEnd, LpError> {
        loop {
            let bland = *iterations >= options.bland_after;
            let rule = (!bland).then_some(options.pricing);
            let Some(e) = self.choose_entering(rule, options.opt_tol) else {
                if self.since_refactor == 0 {
                    return Ok(PhaseEnd::Optimal);
                }
                // confirm optimality on a freshly rebuilt tableau
                self.refactor()?;
                self.price(cost);
                continue;
            };
            let Some(r) = self.choose_leaving(e, bland, options.pivot_tol) else {
                return Ok(PhaseEnd::Unbounded);
            };
            if *iterations >= options.max_iters {
                return Err(LpError::IterationLimit {
                    iterations: *iterations,
                    basis: self.basis.clone(),
                });
            }
            self.pivot(r, e);
            *iterations += 1;
            if phase_two {
                self.phase_two_objectives.push(self.reduced[self.ncols()]);
            }
            if self.since_refactor >= options.refactor_every {
                self.refactor()?;
                self.price(cost);
            }
        }
    }

    /// Pivots zero-level artificials out of the basis; rows where that is
    /// impossible are linearly dependent and are dropped.
    fn expel_artificials(&mut self, pivot_tol: f64) {
        let mut r = 0;
        while r < self.rows.len() {
            let Column::Artificial(origin) = self.kinds[self.basis[r]] else {
                r += 1;
                continue;
            };
            let n = self.ncols();
            let candidate = (0..n)
                .filter(|&j| !self.kinds[j].is_artificial())
                .map(|j| (j, self.rows[r][j].abs()))
                .filter(|&(_, a)| a > pivot_tol.max(1e-7))
                .fold(None, |acc: Option<(usize, f64)>, c| match acc {
                    Some(b) if b.1 >= c.1 => Some(b),
                    _ => Some(c),
                });
            match candidate {
                Some((j, _)) => {
                    self.pivot(r, j);
                    r += 1;
                }
                None => {
                    self.rows.remove(r);
                    self.basis.remove(r);
                    self.row_origin.retain(|&o| o != origin);
                }
            }
        }
    }

    fn standard_values(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.ncols()];
        for (r, &bv) in self.basis.iter().enumerate() {
            x[bv] = self.rhs(r);
        }
        x
    }

    fn original_values(&self, n: usize) -> Vec<f64> {
        let x = self.standard_values();
        let mut z = vec![0.0; n];
        for (j, kind) in self.kinds.iter().enumerate() {
            match *kind {
                Column::Positive(v) => z[v] += x[j],
                Column::Negative(v) => z[v] -= x[j],
                _ => {}
            }
        }
        z
    }

    fn run(&mut self, problem: &LpProblem, options: &SolveOptions) -> Result<LpSolution, LpError> {
        let n = problem.num_vars();
        let mut iterations = 0;
        let phase_one_cost: Vec<f64> = self
            .kinds
            .iter()
            .map(|k| if k.is_artificial() { -1.0 } else { 0.0 })
            .collect();
        let has_artificials = phase_one_cost.iter().any(|&c| c != 0.0);

        if has_artificials {
            self.price(&phase_one_cost);
            // phase one is bounded below by zero, so it cannot be unbounded
            self.iterate(&phase_one_cost, options, &mut iterations, false)?;
            let infeasibility: f64 = self
                .basis
                .iter()
                .enumerate()
                .filter(|(_, &bv)| self.kinds[bv].is_artificial())
                .map(|(r, _)| self.rhs(r).max(0.0))
                .sum();
            let scale = 1.0 + self.b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if infeasibility > 1e-8 * scale {
                let values = self.original_values(n);
                return Ok(self.finish(problem, LpStatus::Infeasible, values, iterations));
            }
            self.expel_artificials(options.pivot_tol);
            for (j, kind) in self.kinds.iter().enumerate() {
                if kind.is_artificial() {
                    self.enterable[j] = false;
                }
            }
            self.refactor()?;
        }

        let cost = self.cost.clone();
        self.price(&cost);
        let end = self.iterate(&cost, options, &mut iterations, true)?;
        let mut values = self.original_values(n);
        for (v, z) in problem.variables.iter().zip(values.iter_mut()) {
            if v.nonneg && *z < 0.0 && *z > -1e-9 {
                *z = 0.0;
            }
        }
        let status = match end {
            PhaseEnd::Optimal => LpStatus::Optimal,
            PhaseEnd::Unbounded => LpStatus::Unbounded,
        };
        Ok(self.finish(problem, status, values, iterations))
    }

    fn finish(
        &mut self,
        problem: &LpProblem,
        status: LpStatus,
        values: Vec<f64>,
        iterations: usize,
    ) -> LpSolution {
        let objective = problem
            .objective
            .iter()
            .zip(&values)
            .map(|(c, z)| c * z)
            .sum();
        let max_residual = check_solution(problem, &values).max();
        LpSolution {
            status,
            values,
            objective,
            iterations,
            max_residual,
            basis: self.basis.clone(),
            pivots: std::mem::take(&mut self.pivots),
            phase_two_objectives: std::mem::take(&mut self.phase_two_objectives),
        }
    }
}
