//! Stationary backlog distribution of the birth-death chain induced by a
//! recommendation policy.
//!
//! Arrivals of rate `lambda` are told to join at state `x` with probability
//! `P1 sigma(1|x,1) + P2 sigma(1|x,2)` and service has rate 1, so detailed
//! balance gives `mu(x+1) = lambda * mu(x) * admit(x)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, Policy, RewardFn};

/// Tail mass above which the truncation is considered to distort the model.
pub const MAX_TAIL_MASS: f64 = 1e-8;

// Rescale the running weights once they exceed this.
const RESCALE_ABOVE: f64 = 1e150;

#[derive(Debug, Error, PartialEq)]
pub enum StationaryError {
    #[error("policy covers states 0..={policy} but x_max is {x_max}")]
    Dimension { policy: usize, x_max: usize },
    #[error("stationary weights are not finite (lambda = {lambda})")]
    NonFinite { lambda: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist {
    pub mu: Vec<f64>,
    /// `mu(x_max)`.
    pub tail_mass: f64,
}

impl StationaryDist {
    pub fn from_mu(mu: Vec<f64>) -> Self {
        let tail_mass = *mu.last().unwrap_or(&0.0);
        StationaryDist { mu, tail_mass }
    }

    pub fn point_mass(x_max: usize, at: usize) -> Self {
        let mut mu = vec![0.0; x_max + 1];
        mu[at] = 1.0;
        StationaryDist::from_mu(mu)
    }

    pub fn x_max(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.mu.iter().sum()
    }

    /// Largest `|mu(x+1) - lambda mu(x) admit(x)|` over `x < x_max`.
    pub fn recursion_residual(&self, policy: &Policy, lambda: f64, low_prior: f64) -> f64 {
        self.mu
            .windows(2)
            .enumerate()
            .map(|(x, w)| (w[1] - lambda * w[0] * policy.mixed_admit(x, low_prior)).abs())
            .fold(0.0, f64::max)
    }

    /// Problems with the truncation: too much mass at `x_max`, or the policy
    /// still admitting there.
    pub fn truncation_issues(&self, policy: &Policy, low_prior: f64, tol: f64) -> Vec<String> {
        let mut issues = Vec::new();
        if self.tail_mass > MAX_TAIL_MASS {
            issues.push(format!(
                "tail mass mu({}) = {:.3e} exceeds {MAX_TAIL_MASS:e}; increase x_max",
                self.x_max(),
                self.tail_mass
            ));
        }
        let x_max = self.x_max();
        if self.tail_mass > tol && policy.mixed_admit(x_max, low_prior) > tol {
            issues.push(format!(
                "policy admits at the truncation state {x_max} with probability {:.3e}",
                policy.mixed_admit(x_max, low_prior)
            ));
        }
        issues
    }
}

/// Solves the birth-death balance equations on `0..=x_max`.
///
/// Weights start at `mu(0) = 1` and are rescaled whenever they grow past
/// `1e150`, so rates above 1 do not overflow before normalisation.
pub fn stationary_distribution(
    policy: &Policy,
    lambda: f64,
    low_prior: f64,
    x_max: usize,
) -> Result<StationaryDist, StationaryError> {
    if policy.x_max() != x_max {
        return Err(StationaryError::Dimension {
            policy: policy.x_max(),
            x_max,
        });
    }
    let mut weights = Vec::with_capacity(x_max + 1);
    weights.push(1.0_f64);
    for x in 0..x_max {
        let next = weights[x] * lambda * policy.mixed_admit(x, low_prior);
        if !next.is_finite() {
            return Err(StationaryError::NonFinite { lambda });
        }
        weights.push(next);
        if next > RESCALE_ABOVE {
            let scale = 1.0 / next;
            weights.iter_mut().for_each(|w| *w *= scale);
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(StationaryError::NonFinite { lambda });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(StationaryDist::from_mu(weights))
}

/// `vbar = sum_x v(x) mu(x)`.
pub fn expected_reward(mu: &StationaryDist, reward: &RewardFn) -> Result<f64, ModelError> {
    mu.mu
        .iter()
        .enumerate()
        .try_fold(0.0, |acc, (x, &m)| Ok(acc + reward.at(x)? * m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Stationary vector of the truncated generator by power iteration on
    /// the uniformised chain.
    fn power_iteration(policy: &Policy, lambda: f64, prior: f64, x_max: usize) -> Vec<f64> {
        let n = x_max + 1;
        let up: Vec<f64> = (0..n)
            .map(|x| {
                if x < x_max {
                    lambda * policy.mixed_admit(x, prior)
                } else {
                    0.0
                }
            })
            .collect();
        let rate = lambda + 1.0;
        let mut p = vec![1.0 / n as f64; n];
        for _ in 0..200_000 {
            let mut next = vec![0.0; n];
            for x in 0..n {
                let down = if x > 0 { 1.0 } else { 0.0 };
                next[x] += p[x] * (1.0 - (up[x] + down) / rate);
                if x < x_max {
                    next[x + 1] += p[x] * up[x] / rate;
                }
                if x > 0 {
                    next[x - 1] += p[x] * down / rate;
                }
            }
            let delta = next
                .iter()
                .zip(&p)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            p = next;
            if delta < 1e-15 {
                break;
            }
        }
        p
    }

    #[test]
    fn never_admit_is_point_mass() {
        let policy = Policy::constant(10, 0.0, 0.0);
        let d = stationary_distribution(&policy, 1.2, 0.5, 10).unwrap();
        assert_eq!(d.mu[0], 1.0);
        assert!(d.mu[1..].iter().all(|&m| m == 0.0));
        assert_eq!(d.tail_mass, 0.0);
    }

    #[test]
    fn admit_all_matches_geometric_law() {
        let policy = Policy::constant(80, 1.0, 1.0);
        let d = stationary_distribution(&policy, 0.5, 0.5, 80).unwrap();
        for x in 0..=80 {
            let expected = 0.5 * 0.5f64.powi(x as i32);
            assert!((d.mu[x] - expected).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn expected_reward_examples() {
        let v = RewardFn::quadratic(50.0);
        let point = StationaryDist::point_mass(60, 0);
        assert_eq!(expected_reward(&point, &v).unwrap(), 1.0);

        let mut mu = vec![0.0; 61];
        mu[0] = 0.5;
        mu[50] = 0.5;
        assert!((expected_reward(&StationaryDist::from_mu(mu), &v).unwrap() - 0.5).abs() < 1e-15);

        let policy = Policy::constant(60, 1.0, 1.0);
        let geo = stationary_distribution(&policy, 0.5, 0.5, 60).unwrap();
        // direct series over the normalised truncated geometric law
        let norm: f64 = (0..=60).map(|x| 0.5f64.powi(x)).sum();
        let direct: f64 = (0..=60)
            .map(|x| (1.0 - (x as f64 / 50.0).powi(2)) * 0.5f64.powi(x) / norm)
            .sum();
        assert!((expected_reward(&geo, &v).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn large_rates_do_not_overflow() {
        let policy = Policy::constant(400, 1.0, 1.0);
        let d = stationary_distribution(&policy, 50.0, 0.5, 400).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-12);
        assert!(d.mu.iter().all(|m| m.is_finite() && *m >= 0.0));
        // ratios preserved near the top, where the mass lives
        assert!((d.mu[400] / d.mu[399] - 50.0).abs() < 1e-9);
        assert!(!d.truncation_issues(&policy, 0.5, 1e-9).is_empty());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let policy = Policy::constant(5, 1.0, 1.0);
        assert!(matches!(
            stationary_distribution(&policy, 1.0, 0.5, 6),
            Err(StationaryError::Dimension { .. })
        ));
    }

    #[test]
    fn tail_mass_shrinks_with_x_max() {
        let mut last = f64::INFINITY;
        for x_max in [20, 40, 80, 160] {
            let policy = Policy::constant(x_max, 1.0, 1.0);
            let d = stationary_distribution(&policy, 0.8, 0.5, x_max).unwrap();
            assert!(d.tail_mass <= last);
            last = d.tail_mass;
        }
    }

    #[test]
    fn tail_mass_is_monotone_for_threshold_policy() {
        let mut last = f64::INFINITY;
        for x_max in [30, 35, 50, 120] {
            let policy = Policy::threshold(x_max, 30);
            let d = stationary_distribution(&policy, 1.2, 0.5, x_max).unwrap();
            assert!(d.tail_mass <= last, "x_max = {x_max}");
            last = d.tail_mass;
        }
    }

    proptest! {
        #[test]
        fn recursion_matches_power_iteration(
            x_max in 1usize..=30,
            lambda in 0.2f64..2.0,
            prior in 0.0f64..=1.0,
            seed in proptest::collection::vec(0.0f64..=1.0, 62),
        ) {
            let low = seed[..=x_max].to_vec();
            let high = seed[31..31 + x_max + 1].to_vec();
            let policy = Policy::new(low, high).unwrap();
            let d = stationary_distribution(&policy, lambda, prior, x_max).unwrap();
            let oracle = power_iteration(&policy, lambda, prior, x_max);
            for (x, (a, b)) in d.mu.iter().zip(&oracle).enumerate() {
                prop_assert!((a - b).abs() < 1e-8, "x = {} {} vs {}", x, a, b);
            }
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            prop_assert!(d.recursion_residual(&policy, lambda, prior) < 1e-12);
        }

        #[test]
        fn normalisation_is_scale_invariant(
            lambda in 1.0f64..40.0,
            cutoff in 1usize..200,
        ) {
            // Big rates force the rescaling path; ratios must survive it.
            let policy = Policy::threshold(200, cutoff);
            let d = stationary_distribution(&policy, lambda, 0.5, 200).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            let top = cutoff;
            if d.mu[top - 1] > 1e-300 {
                prop_assert!((d.mu[top] / d.mu[top - 1] - lambda).abs() < 1e-9 * lambda);
            }
        }
    }
}
