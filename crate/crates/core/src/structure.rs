//! Observational check of the structure of an optimal policy.
//!
//! Either the policy prioritises by type (case 1: where rewards are positive
//! a type-1 admission implies type 2 is always admitted, and where they are
//! negative the reverse), or both types hear the same signal up to a
//! blocking threshold, except at a small set of states pinned down by a
//! linear system in `(epsilon1, psi)` (case 2).
//!
//! Only states with `mu(x) > tol` are examined; elsewhere the recovered
//! policy is a convention, not a decision.

use serde::{Deserialize, Serialize};

use crate::lp_builder::DesignSolution;
use crate::model::{sign_threshold, ModelError, Policy, RewardFn, UserType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Case1,
    Case2,
    Indeterminate,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: usize,
    pub detail: String,
}

/// `psi = intercept + slope * epsilon1` for every `epsilon1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfLine {
    pub slope: f64,
    pub intercept: f64,
}

/// One accepted solution of the exceptional-state system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSolution {
    pub states: Vec<usize>,
    /// Pinned down only when at least two states are involved.
    pub epsilon1: Option<f64>,
    pub psi: Option<f64>,
    /// Feasible set when a single state leaves the system underdetermined.
    pub half_line: Option<HalfLine>,
    /// Relative residual of each state's equation, in `states` order.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExceptionalSearch {
    pub accepted: Vec<ExceptionalSolution>,
    /// Pairs whose 2x2 system is numerically singular.
    pub degenerate: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub case: Case,
    pub x0: Option<usize>,
    pub case1_violations: Vec<Violation>,
    pub xtilde: Option<usize>,
    pub exceptional_set: Vec<usize>,
    pub epsilon1: Option<f64>,
    pub psi: Option<f64>,
    pub half_line: Option<HalfLine>,
    pub residuals: Vec<f64>,
    /// Why the case-2 pattern was rejected, when it was.
    pub case2_notes: Vec<String>,
    pub degenerate_pairs: Vec<(usize, usize)>,
}

/// Coefficients `(a, b, c)` of `a epsilon1 + b psi = c` at state `xk`:
/// `a = 2 sum_{x<=xk} lambda^x v(x)`, `b = sum_{x<=xk} lambda^x`,
/// `c = sum_{x<xk} lambda^x v(x)`.
pub fn system_row(v: &[f64], lambda: f64, xk: usize) -> (f64, f64, f64) {
    let mut weighted = 0.0;
    let mut powers = 0.0;
    let mut below = 0.0;
    let mut w = 1.0;
    for (x, &vx) in v.iter().enumerate().take(xk + 1) {
        if x == xk {
            below = weighted;
        }
        weighted += w * vx;
        powers += w;
        w *= lambda;
    }
    (2.0 * weighted, powers, below)
}

fn relative_residual(row: (f64, f64, f64), eps: f64, psi: f64) -> f64 {
    let (a, b, c) = row;
    let scale = (a * eps).abs().max((b * psi).abs()).max(c.abs()).max(1.0);
    (a * eps + b * psi - c).abs() / scale
}

/// Case-1 violations at reachable states.
pub fn case1_violations(policy: &Policy, mu: &[f64], v: &[f64], tol: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    for (x, (&m, &vx)) in mu.iter().zip(v).enumerate() {
        if m <= tol || vx.abs() <= tol {
            continue;
        }
        let low = policy.admit(UserType::Low, x);
        let high = policy.admit(UserType::High, x);
        if vx > 0.0 && low > tol && high < 1.0 - tol {
            out.push(Violation {
                x,
                detail: format!(
                    "v(x) > 0 and sigma_1 = {low:.6} admits type 1 but sigma_2 = {high:.6} < 1"
                ),
            });
        } else if vx < 0.0 && high > tol && low < 1.0 - tol {
            out.push(Violation {
                x,
                detail: format!(
                    "v(x) < 0 and sigma_2 = {high:.6} admits type 2 but sigma_1 = {low:.6} < 1"
                ),
            });
        }
    }
    out
}

pub fn check_case1(solution: &DesignSolution, tol: f64) -> Result<Vec<Violation>, ModelError> {
    let v = solution.reward().values(solution.config.x_max)?;
    Ok(case1_violations(&solution.policy, &solution.mu.mu, &v, tol))
}

/// Smallest `x` with `sigma(1|y,i) <= tol` for all `y >= x` and both types.
pub fn find_xtilde(policy: &Policy, tol: f64) -> Option<usize> {
    let blocked = |x: usize| UserType::ALL.iter().all(|&u| policy.admit(u, x) <= tol);
    let x_max = policy.x_max();
    if !blocked(x_max) {
        return None;
    }
    let mut x = x_max;
    while x > 0 && blocked(x - 1) {
        x -= 1;
    }
    Some(x)
}

/// Searches single states and pairs of `candidates` for solutions of the
/// exceptional-state system with `epsilon1 > 0`. A pair solution absorbs
/// any further candidate whose equation it satisfies within `tol`.
pub fn solve_exceptional_system(
    candidates: &[usize],
    v: &RewardFn,
    lambda: f64,
    tol: f64,
) -> Result<ExceptionalSearch, ModelError> {
    let top = candidates.iter().copied().max().unwrap_or(0);
    let values = v.values(top)?;
    let rows: Vec<(f64, f64, f64)> = candidates
        .iter()
        .map(|&x| system_row(&values, lambda, x))
        .collect();
    let mut search = ExceptionalSearch::default();

    for (k, &x) in candidates.iter().enumerate() {
        let (a, b, c) = rows[k];
        // b >= 1, so psi is always solvable for a chosen epsilon1
        search.accepted.push(ExceptionalSolution {
            states: vec![x],
            epsilon1: None,
            psi: None,
            half_line: Some(HalfLine {
                slope: -a / b,
                intercept: c / b,
            }),
            residuals: vec![0.0],
        });
    }

    for i in 0..candidates.len() {
        for j in i + 1..candidates.len() {
            let (a1, b1, c1) = rows[i];
            let (a2, b2, c2) = rows[j];
            let det = a1 * b2 - a2 * b1;
            if det.abs() <= 1e-12 * ((a1 * b2).abs() + (a2 * b1).abs()) {
                search.degenerate.push((candidates[i], candidates[j]));
                continue;
            }
            let eps = (c1 * b2 - c2 * b1) / det;
            let psi = (a1 * c2 - a2 * c1) / det;
            if eps <= 0.0 {
                continue;
            }
            let mut states = vec![candidates[i], candidates[j]];
            let mut residuals = vec![
                relative_residual(rows[i], eps, psi),
                relative_residual(rows[j], eps, psi),
            ];
            for (k, &x) in candidates.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let r = relative_residual(rows[k], eps, psi);
                if r <= tol {
                    states.push(x);
                    residuals.push(r);
                }
            }
            search.accepted.push(ExceptionalSolution {
                states,
                epsilon1: Some(eps),
                psi: Some(psi),
                half_line: None,
                residuals,
            });
        }
    }
    Ok(search)
}

/// Case-2 shape test: blocking from `xtilde` on, and below it both types
/// admitted with probability 1 except at the returned candidate states.
fn case2_pattern(
    policy: &Policy,
    mu: &[f64],
    tol: f64,
) -> (Option<usize>, Result<Vec<usize>, String>) {
    let Some(xtilde) = find_xtilde(policy, tol) else {
        return (
            None,
            Err("no blocking threshold inside the truncation".into()),
        );
    };
    let candidates = (0..xtilde)
        .filter(|&x| mu[x] > tol)
        .filter(|&x| {
            UserType::ALL
                .iter()
                .any(|&u| policy.admit(u, x) < 1.0 - tol)
        })
        .collect();
    (Some(xtilde), Ok(candidates))
}

/// Classifies from raw series, as read back from files.
pub fn classify_parts(
    policy: &Policy,
    mu: &[f64],
    reward: &RewardFn,
    lambda: f64,
    tol: f64,
) -> Result<StructureReport, ModelError> {
    let x_max = policy.x_max();
    let v = reward.values(x_max)?;
    let x0 = sign_threshold(reward, x_max)?.x0;
    let case1_violations = case1_violations(policy, mu, &v, tol);
    let (xtilde, pattern) = case2_pattern(policy, mu, tol);

    let mut report = StructureReport {
        case: Case::Indeterminate,
        x0,
        case1_violations,
        xtilde,
        exceptional_set: Vec::new(),
        epsilon1: None,
        psi: None,
        half_line: None,
        residuals: Vec::new(),
        case2_notes: Vec::new(),
        degenerate_pairs: Vec::new(),
    };

    let candidates = match pattern {
        Ok(c) => c,
        Err(note) => {
            report.case2_notes.push(note);
            Vec::new()
        }
    };
    let pattern_holds = report.case2_notes.is_empty();
    if pattern_holds && candidates.is_empty() {
        report.case = Case::Case2;
        return Ok(report);
    }
    if report.case1_violations.is_empty() {
        report.case = Case::Case1;
        return Ok(report);
    }
    if pattern_holds {
        let search = solve_exceptional_system(&candidates, reward, lambda, tol)?;
        report.degenerate_pairs = search.degenerate.clone();
        let covering = search
            .accepted
            .into_iter()
            .find(|s| s.states.len() == candidates.len() && s.residuals.iter().all(|&r| r <= tol));
        match covering {
            Some(s) => {
                report.case = Case::Case2;
                report.exceptional_set = candidates;
                report.epsilon1 = s.epsilon1;
                report.psi = s.psi;
                report.half_line = s.half_line;
                report.residuals = s.residuals;
            }
            None => report.case2_notes.push(format!(
                "no (epsilon1 > 0, psi) solves the system on exceptional states {candidates:?}"
            )),
        }
    }
    Ok(report)
}

pub fn classify(solution: &DesignSolution, tol: f64) -> Result<StructureReport, ModelError> {
    classify_parts(
        &solution.policy,
        &solution.mu.mu,
        solution.reward(),
        solution.config.lambda,
        tol,
    )
}
