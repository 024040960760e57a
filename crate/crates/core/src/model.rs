//! Domain types shared across the solver: model configuration, reward
//! functions, recommendation policies and tax schedules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_X_MAX: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("state {x} is outside the reward table (0..={max})")]
    OutOfRange { x: usize, max: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Private user type. The numeric value multiplies the reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserType {
    Low,
    High,
}

impl UserType {
    pub const ALL: [UserType; 2] = [UserType::Low, UserType::High];

    pub fn value(self) -> f64 {
        match self {
            UserType::Low => 1.0,
            UserType::High => 2.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            UserType::Low => 0,
            UserType::High => 1,
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// Reward `v(x)` for joining a queue holding `x` users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardFn {
    /// `1 - (x / scale)^2`
    Quadratic { scale: f64 },
    /// Explicit values for states `0..values.len()`.
    Table { values: Vec<f64> },
}

impl RewardFn {
    pub fn quadratic(scale: f64) -> Self {
        RewardFn::Quadratic { scale }
    }

    pub fn table(values: Vec<f64>) -> Self {
        RewardFn::Table { values }
    }

    pub fn at(&self, x: usize) -> Result<f64, ModelError> {
        match self {
            RewardFn::Quadratic { scale } => {
                let r = x as f64 / scale;
                Ok(1.0 - r * r)
            }
            RewardFn::Table { values } => values.get(x).copied().ok_or(ModelError::OutOfRange {
                x,
                max: values.len().saturating_sub(1),
            }),
        }
    }

    /// Rewards for states `0..=x_max`.
    pub fn values(&self, x_max: usize) -> Result<Vec<f64>, ModelError> {
        (0..=x_max).map(|x| self.at(x)).collect()
    }
}

pub fn reward_at(reward: &RewardFn, x: usize) -> Result<f64, ModelError> {
    reward.at(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignThreshold {
    /// First state with `v(x) <= 0`, if any.
    pub x0: Option<usize>,
    /// False if `v` increases somewhere on the truncated range.
    pub monotone: bool,
}

/// Locates the first state where the reward stops being positive.
pub fn sign_threshold(reward: &RewardFn, x_max: usize) -> Result<SignThreshold, ModelError> {
    let values = reward.values(x_max)?;
    let x0 = values.iter().position(|&v| v <= 0.0);
    let monotone = values.windows(2).all(|w| w[1] <= w[0]);
    Ok(SignThreshold { x0, monotone })
}

/// Join decision of a user who declines to hear a recommendation:
/// join iff `i * vbar - p >= 0`.
pub fn outside_option(user: UserType, vbar: f64, price: f64) -> bool {
    user.value() * vbar - price >= 0.0
}

fn default_prior() -> f64 {
    0.5
}

fn default_x_max() -> usize {
    DEFAULT_X_MAX
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Poisson arrival rate; service rate is 1.
    pub lambda: f64,
    /// Price paid by users who join without hearing a recommendation.
    pub price: f64,
    /// Probability that an arrival is of the low type.
    #[serde(default = "default_prior")]
    pub type_prior: f64,
    pub reward: RewardFn,
    #[serde(default = "default_x_max")]
    pub x_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl ModelConfig {
    /// Arrival rate 1.2, `v(x) = 1 - (x/50)^2`, uniform types, 200 states.
    pub fn reference(price: f64) -> Self {
        ModelConfig {
            lambda: 1.2,
            price,
            type_prior: 0.5,
            reward: RewardFn::quadratic(50.0),
            x_max: DEFAULT_X_MAX,
            tol: DEFAULT_TOL,
        }
    }

    pub fn prior(&self, user: UserType) -> f64 {
        match user {
            UserType::Low => self.type_prior,
            UserType::High => 1.0 - self.type_prior,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.price.is_finite() && self.price >= 0.0) {
            return bad(format!("price must be nonnegative, got {}", self.price));
        }
        if !(0.0..=1.0).contains(&self.type_prior) {
            return bad(format!(
                "type_prior must lie in [0, 1], got {}",
                self.type_prior
            ));
        }
        if self.x_max < 1 {
            return bad("x_max must be at least 1".into());
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        match &self.reward {
            RewardFn::Quadratic { scale } if !(scale.is_finite() && *scale > 0.0) => {
                return bad(format!("quadratic scale must be positive, got {scale}"));
            }
            RewardFn::Table { values } if values.len() < self.x_max + 1 => {
                return bad(format!(
                    "reward table has {} entries but x_max = {} needs {}",
                    values.len(),
                    self.x_max,
                    self.x_max + 1
                ));
            }
            RewardFn::Table { values } if values.iter().any(|v| !v.is_finite()) => {
                return bad("reward table contains a non-finite value".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// Recommendation policy: probability of recommending "join" per type and state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    admit: [Vec<f64>; 2],
}

impl Policy {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, ModelError> {
        if low.len() != high.len() || low.is_empty() {
            return Err(ModelError::InvalidConfig(format!(
                "policy rows must be non-empty and equal length ({} vs {})",
                low.len(),
                high.len()
            )));
        }
        if let Some(bad) = low.iter().chain(&high).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ModelError::InvalidConfig(format!(
                "admission probability {bad} is outside [0, 1]"
            )));
        }
        Ok(Policy { admit: [low, high] })
    }

    pub fn constant(x_max: usize, low: f64, high: f64) -> Self {
        Policy::new(vec![low; x_max + 1], vec![high; x_max + 1]).expect("constant policy")
    }

    /// Admit both types below `cutoff`, block from `cutoff` on.
    pub fn threshold(x_max: usize, cutoff: usize) -> Self {
        let row: Vec<f64> = (0..=x_max)
            .map(|x| if x < cutoff { 1.0 } else { 0.0 })
            .collect();
        Policy {
            admit: [row.clone(), row],
        }
    }

    pub fn x_max(&self) -> usize {
        self.admit[0].len() - 1
    }

    pub fn admit(&self, user: UserType, x: usize) -> f64 {
        self.admit[user.index()][x]
    }

    pub fn row(&self, user: UserType) -> &[f64] {
        &self.admit[user.index()]
    }

    pub fn set(&mut self, user: UserType, x: usize, p: f64) {
        self.admit[user.index()][x] = p.clamp(0.0, 1.0);
    }

    /// Probability that an arrival at state `x` is told to join.
    pub fn mixed_admit(&self, x: usize, low_prior: f64) -> f64 {
        low_prior * self.admit[0][x] + (1.0 - low_prior) * self.admit[1][x]
    }
}

/// Tax offset, allocations and the resulting per-type taxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaxSchedule {
    pub t0: f64,
    pub q1: f64,
    pub q2: f64,
    pub t1: f64,
    pub t2: f64,
}

impl TaxSchedule {
    pub fn tax(&self, user: UserType) -> f64 {
        match user {
            UserType::Low => self.t1,
            UserType::High => self.t2,
        }
    }

    pub fn allocation(&self, user: UserType) -> f64 {
        match user {
            UserType::Low => self.q1,
            UserType::High => self.q2,
        }
    }
}

/// Expected utility of a participant of type `truth` who reports `report`,
/// evaluated by direct summation over states.
pub fn expected_utility_report(
    truth: UserType,
    report: UserType,
    mu: &[f64],
    policy: &Policy,
    taxes: &TaxSchedule,
    reward: &RewardFn,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (x, &m) in mu.iter().enumerate() {
        total += truth.value() * reward.at(x)? * m * policy.admit(report, x);
    }
    Ok(total - taxes.tax(report))
}

/// Closed form of [`expected_utility_report`] under the offset tax rule:
/// `(i - m) q(m) + sum_{j < m} q(j) - t0`.
pub fn closed_form_utility(truth: UserType, report: UserType, taxes: &TaxSchedule) -> f64 {
    let lower: f64 = UserType::ALL
        .iter()
        .filter(|j| j.index() < report.index())
        .map(|&j| taxes.allocation(j))
        .sum();
    (truth.value() - report.value()) * taxes.allocation(report) + lower - taxes.t0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_reward_values() {
        let v = RewardFn::quadratic(50.0);
        assert_eq!(v.at(0).unwrap(), 1.0);
        assert_eq!(v.at(50).unwrap(), 0.0);
        assert!((v.at(60).unwrap() - (-0.44)).abs() < 1e-12);
    }

    #[test]
    fn table_out_of_range() {
        let v = RewardFn::table(vec![1.0, 0.5]);
        assert_eq!(v.at(1).unwrap(), 0.5);
        assert_eq!(v.at(2), Err(ModelError::OutOfRange { x: 2, max: 1 }));
    }

    #[test]
    fn sign_thresholds() {
        let t = sign_threshold(&RewardFn::quadratic(50.0), 200).unwrap();
        assert_eq!(
            t,
            SignThreshold {
                x0: Some(50),
                monotone: true
            }
        );
        let t = sign_threshold(&RewardFn::table(vec![1.0, 1.0, 1.0]), 2).unwrap();
        assert_eq!(t.x0, None);
        let t = sign_threshold(&RewardFn::table(vec![2.0, 1.0, -1.0, -2.0]), 3).unwrap();
        assert_eq!(t.x0, Some(2));
        let t = sign_threshold(&RewardFn::table(vec![1.0, 2.0, -1.0]), 2).unwrap();
        assert_eq!(t.x0, Some(2));
        assert!(!t.monotone);
    }

    #[test]
    fn quadratic_threshold_is_first_nonpositive_state() {
        for scale in [3.0, 7.5, 12.3, 50.0] {
            let t = sign_threshold(&RewardFn::quadratic(scale), 100).unwrap();
            assert_eq!(t.x0, Some(scale.ceil() as usize), "scale {scale}");
        }
    }

    #[test]
    fn outside_option_cases() {
        assert!(outside_option(UserType::High, 0.3, 0.2));
        assert!(!outside_option(UserType::Low, 0.3, 0.5));
        assert!(outside_option(UserType::Low, 0.5, 0.5));
    }

    #[test]
    fn outside_option_monotone_in_type() {
        for vbar in [0.0, 0.1, 0.4, 1.0] {
            for p in [0.0, 0.05, 0.3, 0.9] {
                if outside_option(UserType::Low, vbar, p) {
                    assert!(outside_option(UserType::High, vbar, p));
                }
            }
        }
    }

    #[test]
    fn closed_form_examples() {
        let taxes = TaxSchedule {
            t0: -0.05,
            q1: 0.1,
            q2: 0.3,
            t1: 0.05,
            t2: 0.45,
        };
        assert!((closed_form_utility(UserType::Low, UserType::Low, &taxes) - 0.05).abs() < 1e-15);
        assert!((closed_form_utility(UserType::High, UserType::High, &taxes) - 0.15).abs() < 1e-15);
        assert!((closed_form_utility(UserType::High, UserType::Low, &taxes) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn config_round_trip_and_validation() {
        let json = r#"{"lambda":1.2,"price":0.2,"reward":{"kind":"quadratic","scale":50}}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg, ModelConfig::reference(0.2));
        cfg.validate().unwrap();

        let json = r#"{"lambda":1.0,"price":0,"type_prior":0.5,"x_max":2,"tol":1e-9,
                       "reward":{"kind":"table","values":[1,0.5,-1]}}"#;
        let cfg: ModelConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();

        let short = ModelConfig {
            x_max: 3,
            ..cfg.clone()
        };
        assert!(short.validate().is_err());
        let neg = ModelConfig {
            lambda: -1.0,
            ..cfg
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn policy_rejects_bad_probabilities() {
        assert!(Policy::new(vec![0.5, 1.2], vec![0.0, 0.0]).is_err());
        assert!(Policy::new(vec![0.5], vec![0.0, 0.0]).is_err());
    }
}
