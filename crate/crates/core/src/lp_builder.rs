//! The designer's problem as a linear program over the joint occupation
//! measure `gamma(s, i, x)` of (recommendation, type, backlog), and the
//! translation of an LP optimum back into a policy, a stationary law and
//! a tax schedule.
//!
//! The tax offset enters as `t0 = -u` with `u >= 0`, so every variable of
//! the program is nonnegative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incentives::{
    allocations, build_taxes, revenue, verify_dsic, verify_ir, IncentiveReport, VERIFY_TOL,
};
use crate::model::{ModelConfig, ModelError, Policy, RewardFn, TaxSchedule, UserType};
use crate::simplex::{
    check_solution, solve, Constraint, LpError, LpProblem, LpSolution, LpStatus, ResidualReport,
    SolveOptions, Variable,
};
use crate::stationary::{expected_reward, StationaryDist};

#[derive(Debug, Error)]
pub enum DesignError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("the occupation-measure program assumes equally likely types; got type_prior = {0}")]
    UnsupportedPrior(f64),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("solver finished with status {status:?} (max residual {:.3e})", residuals.max())]
    NotOptimal {
        status: LpStatus,
        residuals: ResidualReport,
    },
    #[error("recovered marginals violate the balance recursion by {residual:.3e}")]
    Inconsistent { residual: f64 },
    #[error("occupation vector has {got} entries, expected {expected}")]
    Dimension { got: usize, expected: usize },
}

/// Column of `gamma(s, user, x)` in the program.
pub fn gamma_index(s: usize, user: UserType, x: usize, x_max: usize) -> usize {
    (2 * s + user.index()) * (x_max + 1) + x
}

/// Column of `u = -t0`.
pub fn offset_index(x_max: usize) -> usize {
    4 * (x_max + 1)
}

/// Joint stationary probabilities `gamma(s, i, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationMeasure {
    x_max: usize,
    gamma: Vec<f64>,
}

impl OccupationMeasure {
    pub fn new(x_max: usize, gamma: Vec<f64>) -> Result<Self, DesignError> {
        let expected = 4 * (x_max + 1);
        if gamma.len() != expected {
            return Err(DesignError::Dimension {
                got: gamma.len(),
                expected,
            });
        }
        Ok(OccupationMeasure { x_max, gamma })
    }

    /// Embeds a policy and its stationary law: `gamma(s,i,x) = mu(x) P(i) sigma(s|x,i)`
    /// with uniform types.
    pub fn from_policy(policy: &Policy, mu: &StationaryDist) -> Self {
        let x_max = policy.x_max();
        let mut gamma = vec![0.0; 4 * (x_max + 1)];
        for user in UserType::ALL {
            for x in 0..=x_max {
                let a = policy.admit(user, x);
                gamma[gamma_index(1, user, x, x_max)] = 0.5 * mu.mu[x] * a;
                gamma[gamma_index(0, user, x, x_max)] = 0.5 * mu.mu[x] * (1.0 - a);
            }
        }
        OccupationMeasure { x_max, gamma }
    }

    pub fn x_max(&self) -> usize {
        self.x_max
    }

    pub fn get(&self, s: usize, user: UserType, x: usize) -> f64 {
        self.gamma[gamma_index(s, user, x, self.x_max)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn total(&self) -> f64 {
        self.gamma.iter().sum()
    }
}

/// Builds the revenue-maximising program for `config`.
pub fn build_lp(config: &ModelConfig) -> Result<LpProblem, DesignError> {
    config.validate()?;
    if config.type_prior != 0.5 {
        return Err(DesignError::UnsupportedPrior(config.type_prior));
    }
    let x_max = config.x_max;
    let states = x_max + 1;
    let n = 4 * states + 1;
    let u = offset_index(x_max);
    let lambda = config.lambda;
    let p = config.price;
    let v = config.reward.values(x_max)?;
    let g = |s: usize, user: UserType, x: usize| gamma_index(s, user, x, x_max);

    let mut variables = Vec::with_capacity(n);
    for s in 0..2 {
        for user in UserType::ALL {
            for x in 0..states {
                variables.push(Variable {
                    name: format!("gamma({s},{},{x})", user.label()),
                    nonneg: true,
                });
            }
        }
    }
    variables.push(Variable {
        name: "u".into(),
        nonneg: true,
    });

    let mut objective = vec![0.0; n];
    objective[u] = -lambda;
    for x in 0..states {
        objective[g(1, UserType::High, x)] = 2.0 * lambda * v[x];
    }

    let zeros = || vec![0.0; n];
    let mut le = Vec::new();

    // u >= vbar - p
    let mut row = zeros();
    for x in 0..states {
        for s in 0..2 {
            for user in UserType::ALL {
                row[g(s, user, x)] += v[x];
            }
        }
    }
    row[u] = -1.0;
    le.push(Constraint {
        name: "ir_low_vs_outside".into(),
        coeffs: row,
        rhs: p,
    });

    // q1 + u >= 2 vbar - p
    let mut row = zeros();
    for x in 0..states {
        for s in 0..2 {
            for user in UserType::ALL {
                row[g(s, user, x)] += 2.0 * v[x];
            }
        }
        row[g(1, UserType::Low, x)] -= 2.0 * v[x];
    }
    row[u] = -1.0;
    le.push(Constraint {
        name: "ir_high_vs_outside".into(),
        coeffs: row,
        rhs: p,
    });

    // u >= 0
    let mut row = zeros();
    row[u] = -1.0;
    le.push(Constraint {
        name: "ir_low_vs_zero".into(),
        coeffs: row,
        rhs: 0.0,
    });

    // q1 + u >= 0
    let mut row = zeros();
    for x in 0..states {
        row[g(1, UserType::Low, x)] = -2.0 * v[x];
    }
    row[u] = -1.0;
    le.push(Constraint {
        name: "ir_high_vs_zero".into(),
        coeffs: row,
        rhs: 0.0,
    });

    // q1 <= q2
    let mut row = zeros();
    for x in 0..states {
        row[g(1, UserType::Low, x)] = v[x];
        row[g(1, UserType::High, x)] = -v[x];
    }
    le.push(Constraint {
        name: "monotone_allocation".into(),
        coeffs: row,
        rhs: 0.0,
    });

    let mut eq = Vec::new();
    for x in 0..x_max {
        let mut row = zeros();
        for s in 0..2 {
            for user in UserType::ALL {
                row[g(s, user, x + 1)] = 1.0;
            }
        }
        for user in UserType::ALL {
            row[g(1, user, x)] = -lambda;
        }
        eq.push(Constraint {
            name: format!("flow({x})"),
            coeffs: row,
            rhs: 0.0,
        });
    }
    let mut row = zeros();
    for user in UserType::ALL {
        row[g(1, user, x_max)] = 1.0;
    }
    eq.push(Constraint {
        name: format!("closure({x_max})"),
        coeffs: row,
        rhs: 0.0,
    });

    for user in UserType::ALL {
        for x in 0..states {
            let mut row = zeros();
            for s in 0..2 {
                for other in UserType::ALL {
                    row[g(s, other, x)] -= 0.5;
                }
                row[g(s, user, x)] += 1.0;
            }
            eq.push(Constraint {
                name: format!("type_marginal({},{x})", user.label()),
                coeffs: row,
                rhs: 0.0,
            });
        }
    }

    let mut row = zeros();
    row[..u].iter_mut().for_each(|c| *c = 1.0);
    eq.push(Constraint {
        name: "mass".into(),
        coeffs: row,
        rhs: 1.0,
    });

    Ok(LpProblem {
        variables,
        objective,
        eq,
        le,
    })
}

/// `sigma(1|x,i) = gamma(1,i,x) / (gamma(0,i,x) + gamma(1,i,x))`; states where
/// the denominator is at most `tol` get `sigma = 0` and are returned.
pub fn recover_policy(gamma: &OccupationMeasure, tol: f64) -> (Policy, Vec<usize>) {
    let x_max = gamma.x_max();
    let mut rows = [vec![0.0; x_max + 1], vec![0.0; x_max + 1]];
    let mut flagged = vec![false; x_max + 1];
    for user in UserType::ALL {
        for (x, slot) in rows[user.index()].iter_mut().enumerate() {
            let join = gamma.get(1, user, x).max(0.0);
            let total = join + gamma.get(0, user, x).max(0.0);
            if total > tol {
                *slot = (join / total).clamp(0.0, 1.0);
            } else {
                flagged[x] = true;
            }
        }
    }
    let unreachable = (0..=x_max).filter(|&x| flagged[x]).collect();
    let [low, high] = rows;
    (
        Policy::new(low, high).expect("probabilities are clamped"),
        unreachable,
    )
}

/// `mu(x) = sum_{s,i} gamma(s,i,x)`, checked against the balance recursion
/// under the recovered policy.
pub fn recover_marginals(
    gamma: &OccupationMeasure,
    lambda: f64,
    tol: f64,
) -> Result<StationaryDist, DesignError> {
    let x_max = gamma.x_max();
    let mu: Vec<f64> = (0..=x_max)
        .map(|x| {
            (0..2)
                .flat_map(|s| UserType::ALL.map(|user| gamma.get(s, user, x)))
                .sum::<f64>()
                .max(0.0)
        })
        .collect();
    let dist = StationaryDist::from_mu(mu);
    let (policy, _) = recover_policy(gamma, tol);
    let residual = dist.recursion_residual(&policy, lambda, 0.5);
    if residual > 100.0 * tol {
        return Err(DesignError::Inconsistent { residual });
    }
    Ok(dist)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub status: LpStatus,
    pub iterations: usize,
    pub residuals: ResidualReport,
    pub recursion_residual: f64,
    /// States where some type has `gamma(.,i,x) <= tol`; the policy there is set to 0.
    pub unreachable: Vec<usize>,
    pub tail_mass: f64,
    pub truncation_issues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSolution {
    pub config: ModelConfig,
    pub policy: Policy,
    pub mu: StationaryDist,
    pub vbar: f64,
    pub taxes: TaxSchedule,
    pub occupation: OccupationMeasure,
    /// LP objective `lambda t0 + 2 lambda sum_x v(x) gamma(1,2,x)`.
    pub objective_value: f64,
    /// `lambda (t0 + q2)` from the recovered allocations.
    pub revenue: f64,
    pub incentives: IncentiveReport,
    pub diagnostics: Diagnostics,
}

impl DesignSolution {
    pub fn is_reachable(&self, x: usize, tol: f64) -> bool {
        self.mu.mu[x] > tol
    }

    pub fn reward(&self) -> &RewardFn {
        &self.config.reward
    }

    /// Problems that make the solution unfit for reporting.
    pub fn validation_issues(&self) -> Vec<String> {
        let mut issues = self.diagnostics.truncation_issues.clone();
        if !self.incentives.all_ok() {
            issues.push(format!("incentive checks failed: {:?}", self.incentives));
        }
        if self.diagnostics.residuals.max() > 1e-8 {
            issues.push(format!(
                "constraint residual {:.3e} exceeds 1e-8",
                self.diagnostics.residuals.max()
            ));
        }
        issues
    }
}

pub fn assemble_solution(
    lp: &LpSolution,
    problem: &LpProblem,
    config: &ModelConfig,
) -> Result<DesignSolution, DesignError> {
    let residuals = check_solution(problem, &lp.values);
    if lp.status != LpStatus::Optimal {
        return Err(DesignError::NotOptimal {
            status: lp.status,
            residuals,
        });
    }
    let x_max = config.x_max;
    let u = offset_index(x_max);
    let occupation = OccupationMeasure::new(x_max, lp.values[..u].to_vec())?;
    let t0 = -lp.values[u];

    let (policy, unreachable) = recover_policy(&occupation, config.tol);
    let mu = recover_marginals(&occupation, config.lambda, config.tol)?;
    let vbar = expected_reward(&mu, &config.reward)?;
    let (q1, q2) = allocations(&policy, &mu, &config.reward)?;
    let taxes = build_taxes(t0, q1, q2);
    let incentives = IncentiveReport::combine(
        verify_dsic(&taxes, VERIFY_TOL),
        verify_ir(&taxes, vbar, config.price, VERIFY_TOL),
    );
    let diagnostics = Diagnostics {
        status: lp.status,
        iterations: lp.iterations,
        residuals,
        recursion_residual: mu.recursion_residual(&policy, config.lambda, 0.5),
        unreachable,
        tail_mass: mu.tail_mass,
        truncation_issues: mu.truncation_issues(&policy, 0.5, config.tol),
    };
    Ok(DesignSolution {
        config: config.clone(),
        revenue: revenue(&taxes, config.lambda, config.type_prior),
        objective_value: lp.objective,
        policy,
        mu,
        vbar,
        taxes,
        occupation,
        incentives,
        diagnostics,
    })
}

/// Builds, solves and unpacks the designer's program.
pub fn solve_design(
    config: &ModelConfig,
    options: &SolveOptions,
) -> Result<DesignSolution, DesignError> {
    let problem = build_lp(config)?;
    let lp = solve(&problem, options)?;
    assemble_solution(&lp, &problem, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stationary::stationary_distribution;

    fn tiny(x_max: usize, price: f64) -> ModelConfig {
        ModelConfig {
            lambda: 1.2,
            price,
            type_prior: 0.5,
            reward: RewardFn::quadratic(4.0),
            x_max,
            tol: 1e-9,
        }
    }

    #[test]
    fn counts_for_two_states() {
        let lp = build_lp(&tiny(1, 0.0)).unwrap();
        assert_eq!(lp.num_vars(), 9);
        let count = |prefix: &str| lp.eq.iter().filter(|r| r.name.starts_with(prefix)).count();
        assert_eq!(count("flow") + count("closure"), 2);
        assert_eq!(count("type_marginal"), 4);
        assert_eq!(count("mass"), 1);
        assert_eq!(lp.eq.len(), 7);
        assert_eq!(lp.le.len(), 5);
    }

    #[test]
    fn catalog_names_are_unique_and_mass_row_is_all_ones() {
        let lp = build_lp(&tiny(6, 0.1)).unwrap();
        let mut names: Vec<&str> = lp.variables.iter().map(|v| v.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), 4 * 7 + 1);
        let mass = lp.eq.iter().find(|r| r.name == "mass").unwrap();
        let u = offset_index(6);
        assert!(mass.coeffs[..u].iter().all(|&c| c == 1.0));
        assert_eq!(mass.coeffs[u], 0.0);
    }

    #[test]
    fn non_uniform_prior_is_rejected() {
        let cfg = ModelConfig {
            type_prior: 0.3,
            ..tiny(3, 0.0)
        };
        assert!(matches!(
            build_lp(&cfg),
            Err(DesignError::UnsupportedPrior(_))
        ));
    }

    #[test]
    fn policy_recovery_conventions() {
        let mut gamma = vec![0.0; 8];
        // state 0: both types split evenly; state 1 unreachable
        gamma[gamma_index(0, UserType::Low, 0, 1)] = 0.25;
        gamma[gamma_index(1, UserType::Low, 0, 1)] = 0.25;
        gamma[gamma_index(0, UserType::High, 0, 1)] = 0.25;
        gamma[gamma_index(1, UserType::High, 0, 1)] = 0.25;
        let occ = OccupationMeasure::new(1, gamma).unwrap();
        let (policy, unreachable) = recover_policy(&occ, 1e-9);
        assert_eq!(policy.admit(UserType::Low, 0), 0.5);
        assert_eq!(policy.admit(UserType::High, 1), 0.0);
        assert_eq!(unreachable, vec![1]);
    }

    #[test]
    fn point_mass_marginals() {
        let mut gamma = vec![0.0; 4 * 3];
        gamma[gamma_index(0, UserType::Low, 0, 2)] = 0.5;
        gamma[gamma_index(0, UserType::High, 0, 2)] = 0.5;
        let occ = OccupationMeasure::new(2, gamma).unwrap();
        let mu = recover_marginals(&occ, 1.2, 1e-9).unwrap();
        assert_eq!(mu.mu, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn inconsistent_marginals_are_rejected() {
        let mut gamma = vec![0.0; 4 * 3];
        gamma[gamma_index(0, UserType::Low, 0, 2)] = 0.25;
        gamma[gamma_index(0, UserType::High, 0, 2)] = 0.25;
        gamma[gamma_index(0, UserType::Low, 2, 2)] = 0.25;
        gamma[gamma_index(0, UserType::High, 2, 2)] = 0.25;
        let occ = OccupationMeasure::new(2, gamma).unwrap();
        assert!(matches!(
            recover_marginals(&occ, 1.2, 1e-9),
            Err(DesignError::Inconsistent { .. })
        ));
    }

    #[test]
    fn embedded_threshold_policies_are_feasible() {
        let cfg = tiny(12, 0.1);
        let lp = build_lp(&cfg).unwrap();
        for cutoff in 0..12 {
            let policy = Policy::threshold(12, cutoff);
            let mu = stationary_distribution(&policy, cfg.lambda, 0.5, 12).unwrap();
            let occ = OccupationMeasure::from_policy(&policy, &mu);
            let vbar = expected_reward(&mu, &cfg.reward).unwrap();
            let (q1, _) = allocations(&policy, &mu, &cfg.reward).unwrap();
            // smallest u meeting every IR row
            let u = (vbar - cfg.price)
                .max(0.0)
                .max(2.0 * vbar - cfg.price - q1)
                .max(-q1);
            let mut z = occ.as_slice().to_vec();
            z.push(u);
            let r = check_solution(&lp, &z);
            assert!(r.within(1e-12), "cutoff {cutoff}: {r:?}");
        }
    }

    #[test]
    fn admit_nothing_objective_is_nonpositive() {
        let cfg = tiny(5, 0.0);
        let lp = build_lp(&cfg).unwrap();
        let policy = Policy::constant(5, 0.0, 0.0);
        let mu = stationary_distribution(&policy, 1.2, 0.5, 5).unwrap();
        let mut z = OccupationMeasure::from_policy(&policy, &mu)
            .as_slice()
            .to_vec();
        // vbar = v(0) = 1 and q1 = 0, so the high type's outside option forces u >= 2
        z.push(2.0);
        assert!(check_solution(&lp, &z).within(1e-15));
        let obj: f64 = lp.objective.iter().zip(&z).map(|(c, z)| c * z).sum();
        assert!((obj - (-1.2 * 2.0)).abs() < 1e-15);
        z[offset_index(5)] = 1.9;
        assert!(check_solution(&lp, &z).max_ineq_violation > 0.09);
    }

    #[test]
    fn small_instance_round_trips() {
        let cfg = ModelConfig {
            reward: RewardFn::quadratic(8.0),
            ..tiny(80, 0.05)
        };
        let sol = solve_design(&cfg, &SolveOptions::default()).unwrap();
        assert!(
            sol.validation_issues().is_empty(),
            "{:?}",
            sol.validation_issues()
        );
        let again = stationary_distribution(&sol.policy, cfg.lambda, 0.5, cfg.x_max).unwrap();
        let gap = again
            .mu
            .iter()
            .zip(&sol.mu.mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(gap < 1e-6, "gap {gap}");
        let lp_objective = cfg.lambda * sol.taxes.t0
            + 2.0
                * cfg.lambda
                * (0..=cfg.x_max)
                    .map(|x| cfg.reward.at(x).unwrap() * sol.occupation.get(1, UserType::High, x))
                    .sum::<f64>();
        assert!((lp_objective - sol.revenue).abs() < 1e-9);
        assert!((sol.objective_value - sol.revenue).abs() < 1e-9);
    }

    #[test]
    fn prohibitive_price_leaves_plain_ir_bounds() {
        // vbar <= 1 always, so with p = 5 both outside-option rows are slack.
        let cfg = ModelConfig {
            reward: RewardFn::quadratic(8.0),
            ..tiny(30, 5.0)
        };
        let sol = solve_design(&cfg, &SolveOptions::default()).unwrap();
        assert!(sol.taxes.t0 <= 1e-12);
        assert!(sol.taxes.q1 - sol.taxes.t0 >= -1e-9);
        assert!(sol.incentives.ir_ok);
    }
}
