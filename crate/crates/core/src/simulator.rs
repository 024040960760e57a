//! Event-driven simulation of the queue under a committed policy and tax
//! schedule.
//!
//! Arrivals come at rate `lambda` and service completes at rate 1 while the
//! backlog is positive. Each arrival draws a type from the prior. A user who
//! participates pays `t(i)` whatever the recommendation, then joins iff told
//! to; a user who stays out joins iff `i * vbar >= p`. Arrivals that would
//! push the backlog past `x_max` are turned away and counted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::incentives::{verify_ir, VERIFY_TOL};
use crate::model::{outside_option, ModelConfig, ModelError, Policy, TaxSchedule, UserType};
use crate::stationary::{expected_reward, stationary_distribution, StationaryError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("horizon must be positive and finite, got {0}")]
    Horizon(f64),
    #[error("policy covers states 0..={policy} but x_max is {x_max}")]
    Dimension { policy: usize, x_max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stationary(#[from] StationaryError),
}

/// Who hears the recommendation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Participation {
    /// A type participates iff its IR constraint holds for the analytic
    /// `vbar` of the policy.
    #[default]
    FollowIr,
    /// Every arrival participates.
    Everyone,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub participation: Participation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub arrivals: u64,
    pub participants: u64,
    pub joins: u64,
    pub balks: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    /// `[type 1, type 2]`.
    pub per_type: [TypeCounts; 2],
    pub services: u64,
    /// Joins refused because the backlog was at `x_max`.
    pub truncation_balks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    /// Fraction of time spent in each state.
    pub empirical_mu: Vec<f64>,
    pub events: EventCounts,
    pub revenue_rate: f64,
    pub tax_collected: f64,
    /// Sum of squared tax payments, for the standard error of the rate.
    pub tax_sq_collected: f64,
    pub seed: u64,
    pub sim_time: f64,
    /// Number of merged replicas (1 for a single run).
    pub replicas: usize,
    /// Whether each type heard recommendations.
    pub participates: [bool; 2],
}

impl SimStats {
    /// Standard error of `revenue_rate`, treating payments as a compound
    /// Poisson process.
    pub fn revenue_std_error(&self) -> f64 {
        self.tax_sq_collected.sqrt() / self.sim_time
    }
}

/// Total taxes over simulated time.
pub fn empirical_revenue(stats: &SimStats) -> f64 {
    if stats.sim_time > 0.0 {
        stats.tax_collected / stats.sim_time
    } else {
        0.0
    }
}

/// Half the L1 distance; the shorter vector is padded with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..n).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Which types participate, using IR against the analytic stationary law.
pub fn participation(
    config: &ModelConfig,
    policy: &Policy,
    taxes: &TaxSchedule,
    options: &SimOptions,
) -> Result<([bool; 2], f64), SimError> {
    let mu = stationary_distribution(policy, config.lambda, config.type_prior, config.x_max)?;
    let vbar = expected_reward(&mu, &config.reward)?;
    let joins = match options.participation {
        Participation::Everyone => [true, true],
        Participation::FollowIr => {
            let ir = verify_ir(taxes, vbar, config.price, VERIFY_TOL);
            ir.ir_slacks.map(|s| s >= -VERIFY_TOL)
        }
    };
    Ok((joins, vbar))
}

pub fn simulate(
    config: &ModelConfig,
    policy: &Policy,
    taxes: &TaxSchedule,
    horizon: f64,
    seed: u64,
) -> Result<SimStats, SimError> {
    simulate_with(config, policy, taxes, horizon, seed, &SimOptions::default())
}

pub fn simulate_with(
    config: &ModelConfig,
    policy: &Policy,
    taxes: &TaxSchedule,
    horizon: f64,
    seed: u64,
    options: &SimOptions,
) -> Result<SimStats, SimError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::Horizon(horizon));
    }
    let x_max = config.x_max;
    if policy.x_max() != x_max {
        return Err(SimError::Dimension {
            policy: policy.x_max(),
            x_max,
        });
    }
    let (participates, vbar) = participation(config, policy, taxes, options)?;
    let outside = UserType::ALL.map(|u| outside_option(u, vbar, config.price));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupancy = vec![0.0; x_max + 1];
    let mut events = EventCounts::default();
    let mut tax_collected = 0.0;
    let mut tax_sq_collected = 0.0;
    let mut t = 0.0;
    let mut x = 0usize;
    let lambda = config.lambda;

    loop {
        let rate = lambda + if x > 0 { 1.0 } else { 0.0 };
        let dt: f64 = rng.sample::<f64, _>(Exp1) / rate;
        if t + dt >= horizon {
            occupancy[x] += horizon - t;
            break;
        }
        occupancy[x] += dt;
        t += dt;
        if rng.random::<f64>() * rate >= lambda {
            x -= 1;
            events.services += 1;
            continue;
        }
        let user = if rng.random::<f64>() < config.type_prior {
            UserType::Low
        } else {
            UserType::High
        };
        let counts = &mut events.per_type[user.index()];
        counts.arrivals += 1;
        let wants_in = if participates[user.index()] {
            counts.participants += 1;
            let tax = taxes.tax(user);
            tax_collected += tax;
            tax_sq_collected += tax * tax;
            rng.random::<f64>() < policy.admit(user, x)
        } else {
            outside[user.index()]
        };
        if wants_in && x < x_max {
            counts.joins += 1;
            x += 1;
        } else {
            counts.balks += 1;
            if wants_in {
                events.truncation_balks += 1;
            }
        }
    }

    let total: f64 = occupancy.iter().sum();
    let empirical_mu = occupancy.iter().map(|o| o / total).collect();
    Ok(SimStats {
        empirical_mu,
        events,
        revenue_rate: tax_collected / horizon,
        tax_collected,
        tax_sq_collected,
        seed,
        sim_time: horizon,
        replicas: 1,
        participates,
    })
}

/// One replica per seed on its own thread; results come back in seed order.
pub fn simulate_replicas(
    config: &ModelConfig,
    policy: &Policy,
    taxes: &TaxSchedule,
    horizon: f64,
    seeds: &[u64],
    options: &SimOptions,
) -> Result<Vec<SimStats>, SimError> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || simulate_with(config, policy, taxes, horizon, seed, options))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

/// Pools replicas by time weighting. The merged seed is the first one.
pub fn merge(stats: &[SimStats]) -> Option<SimStats> {
    let first = stats.first()?;
    let mut merged = first.clone();
    let mut occupancy: Vec<f64> = first
        .empirical_mu
        .iter()
        .map(|m| m * first.sim_time)
        .collect();
    for s in &stats[1..] {
        for (o, m) in occupancy.iter_mut().zip(&s.empirical_mu) {
            *o += m * s.sim_time;
        }
        for (acc, c) in merged.events.per_type.iter_mut().zip(&s.events.per_type) {
            acc.arrivals += c.arrivals;
            acc.participants += c.participants;
            acc.joins += c.joins;
            acc.balks += c.balks;
        }
        merged.events.services += s.events.services;
        merged.events.truncation_balks += s.events.truncation_balks;
        merged.tax_collected += s.tax_collected;
        merged.tax_sq_collected += s.tax_sq_collected;
        merged.sim_time += s.sim_time;
    }
    let total: f64 = occupancy.iter().sum();
    merged.empirical_mu = occupancy.iter().map(|o| o / total).collect();
    merged.revenue_rate = merged.tax_collected / merged.sim_time;
    merged.replicas = stats.len();
    Some(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::incentives::build_taxes;
    use crate::model::RewardFn;

    fn config(lambda: f64, x_max: usize) -> ModelConfig {
        ModelConfig {
            lambda,
            price: 0.0,
            type_prior: 0.5,
            reward: RewardFn::quadratic(50.0),
            x_max,
            tol: 1e-9,
        }
    }

    fn free() -> TaxSchedule {
        build_taxes(0.0, 0.0, 0.0)
    }

    #[test]
    fn counts_are_consistent() {
        let cfg = config(0.9, 30);
        let policy = Policy::threshold(30, 20);
        let opts = SimOptions {
            participation: Participation::Everyone,
        };
        let s = simulate_with(&cfg, &policy, &free(), 2e4, 7, &opts).unwrap();
        for c in &s.events.per_type {
            assert_eq!(c.joins + c.balks, c.arrivals);
            assert!(c.participants <= c.arrivals);
        }
        assert!((s.empirical_mu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.empirical_mu.iter().all(|&m| m >= 0.0));
        let joins: u64 = s.events.per_type.iter().map(|c| c.joins).sum();
        // backlog never negative and ends where joins minus services leaves it
        assert!(joins >= s.events.services);
        assert!(s.empirical_mu[21..].iter().all(|&m| m == 0.0));
    }

    #[test]
    fn same_seed_same_stats() {
        let cfg = config(1.2, 60);
        let policy = Policy::threshold(60, 40);
        let taxes = build_taxes(-0.1, 0.05, 0.1);
        let opts = SimOptions {
            participation: Participation::Everyone,
        };
        let a = simulate_with(&cfg, &policy, &taxes, 1e4, 3, &opts).unwrap();
        let b = simulate_with(&cfg, &policy, &taxes, 1e4, 3, &opts).unwrap();
        assert_eq!(a, b);
        let c = simulate_with(&cfg, &policy, &taxes, 1e4, 4, &opts).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn never_admit_sits_at_zero_and_still_collects() {
        let cfg = config(1.0, 20);
        let policy = Policy::constant(20, 0.0, 0.0);
        let taxes = build_taxes(-0.2, 0.1, 0.3);
        let opts = SimOptions {
            participation: Participation::Everyone,
        };
        let s = simulate_with(&cfg, &policy, &taxes, 2e5, 11, &opts).unwrap();
        assert_eq!(s.empirical_mu[0], 1.0);
        let expected = 0.5 * (taxes.t1 + taxes.t2);
        assert!((empirical_revenue(&s) - expected).abs() < 3.0 * s.revenue_std_error());
    }

    #[test]
    fn high_types_only_pay_their_tax() {
        let mut cfg = config(1.0, 20);
        cfg.type_prior = 0.0;
        let policy = Policy::constant(20, 0.0, 0.0);
        let taxes = TaxSchedule {
            t0: 0.0,
            q1: 0.0,
            q2: 0.0,
            t1: 0.0,
            t2: 0.5,
        };
        let opts = SimOptions {
            participation: Participation::Everyone,
        };
        let s = simulate_with(&cfg, &policy, &taxes, 1e5, 5, &opts).unwrap();
        assert_eq!(s.events.per_type[0].arrivals, 0);
        assert!((empirical_revenue(&s) - 0.5).abs() < 3.0 * s.revenue_std_error());
    }

    #[test]
    fn nobody_participating_collects_nothing() {
        let cfg = config(1.0, 20);
        let policy = Policy::constant(20, 1.0, 1.0);
        // t0 > 0 breaks IR for both types
        let taxes = build_taxes(0.5, 0.0, 0.0);
        let s = simulate(&cfg, &policy, &taxes, 1e3, 1).unwrap();
        assert_eq!(s.participates, [false, false]);
        assert_eq!(empirical_revenue(&s), 0.0);
    }

    #[test]
    fn truncation_turns_arrivals_away() {
        let cfg = config(3.0, 5);
        let policy = Policy::constant(5, 1.0, 1.0);
        let opts = SimOptions {
            participation: Participation::Everyone,
        };
        let s = simulate_with(&cfg, &policy, &free(), 1e3, 2, &opts).unwrap();
        assert!(s.events.truncation_balks > 0);
        assert!(s.empirical_mu[5] > 0.3);
    }

    #[test]
    fn bad_horizon_is_rejected() {
        let cfg = config(1.0, 5);
        let policy = Policy::constant(5, 1.0, 1.0);
        for h in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                simulate(&cfg, &policy, &free(), h, 0),
                Err(SimError::Horizon(_))
            ));
        }
    }

    #[test]
    fn merge_is_time_weighted() {
        let cfg = config(0.7, 30);
        let policy = Policy::constant(30, 1.0, 1.0);
        let opts = SimOptions::default();
        let runs = simulate_replicas(&cfg, &policy, &free(), 1e3, &[1, 2, 3], &opts).unwrap();
        assert_eq!(
            runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        let m = merge(&runs).unwrap();
        assert_eq!(m.replicas, 3);
        assert_eq!(m.sim_time, 3e3);
        for x in 0..=30 {
            let avg = runs.iter().map(|r| r.empirical_mu[x]).sum::<f64>() / 3.0;
            assert!((m.empirical_mu[x] - avg).abs() < 1e-12);
        }
        assert!(merge(&[]).is_none());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
        assert_eq!(tv_distance(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(tv_distance(&[1.0], &[0.5, 0.5]), 0.5);
    }
}
