//! Offset tax rule, incentive checks and revenue.
//!
//! With allocations `q(i) = sum_x v(x) mu(x) sigma(1|x,i)` the schedule
//! `t(1) = t0 + q(1)`, `t(2) = t0 + 2 q(2) - q(1)` makes truthful reporting
//! a dominant strategy whenever `q(2) >= q(1)`. Type 1 strictly prefers the
//! truth by `q(2) - q(1)`; type 2 is left exactly indifferent, which is what
//! makes `t(2)` the largest DSIC tax given `t(1)`.

use serde::{Deserialize, Serialize};

use crate::model::{closed_form_utility, ModelError, Policy, RewardFn, TaxSchedule, UserType};
use crate::stationary::StationaryDist;

/// Default tolerance for incentive checks. Looser than the solver tolerance
/// because LP optima sit on active constraints.
pub const VERIFY_TOL: f64 = 1e-7;

/// Per-type allocations `(q1, q2)`.
pub fn allocations(
    policy: &Policy,
    mu: &StationaryDist,
    reward: &RewardFn,
) -> Result<(f64, f64), ModelError> {
    let mut q = [0.0; 2];
    for (x, &m) in mu.mu.iter().enumerate() {
        let v = reward.at(x)?;
        for user in UserType::ALL {
            q[user.index()] += v * m * policy.admit(user, x);
        }
    }
    Ok((q[0], q[1]))
}

pub fn build_taxes(t0: f64, q1: f64, q2: f64) -> TaxSchedule {
    TaxSchedule {
        t0,
        q1,
        q2,
        t1: t0 + q1,
        t2: t0 + 2.0 * q2 - q1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MisreportSlack {
    pub truth: u8,
    pub report: u8,
    /// Truthful utility minus misreport utility.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsicReport {
    pub dsic_ok: bool,
    pub monotone_ok: bool,
    pub dsic_slacks: Vec<MisreportSlack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub ir_ok: bool,
    /// `[type 1, type 2]`: participation utility minus outside-option value.
    pub ir_slacks: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncentiveReport {
    pub dsic_ok: bool,
    pub ir_ok: bool,
    pub monotone_ok: bool,
    pub dsic_slacks: Vec<MisreportSlack>,
    pub ir_slacks: [f64; 2],
}

impl IncentiveReport {
    pub fn combine(dsic: DsicReport, ir: IrReport) -> Self {
        IncentiveReport {
            dsic_ok: dsic.dsic_ok,
            ir_ok: ir.ir_ok,
            monotone_ok: dsic.monotone_ok,
            dsic_slacks: dsic.dsic_slacks,
            ir_slacks: ir.ir_slacks,
        }
    }

    pub fn all_ok(&self) -> bool {
        self.dsic_ok && self.ir_ok && self.monotone_ok
    }

    pub fn slack(&self, truth: UserType, report: UserType) -> Option<f64> {
        self.dsic_slacks
            .iter()
            .find(|s| s.truth == truth.label() && s.report == report.label())
            .map(|s| s.slack)
    }
}

/// Checks allocation monotonicity and every truthful-vs-misreport comparison.
pub fn verify_dsic(taxes: &TaxSchedule, tol: f64) -> DsicReport {
    let monotone_ok = taxes.q2 >= taxes.q1 - tol;
    let mut dsic_slacks = Vec::with_capacity(2);
    for truth in UserType::ALL {
        let honest = closed_form_utility(truth, truth, taxes);
        for report in UserType::ALL.into_iter().filter(|&m| m != truth) {
            // utility of a misreport is i q(m) - t(m) for any tax schedule
            let lie = truth.value() * taxes.allocation(report) - taxes.tax(report);
            dsic_slacks.push(MisreportSlack {
                truth: truth.label(),
                report: report.label(),
                slack: honest - lie,
            });
        }
    }
    let dsic_ok = monotone_ok && dsic_slacks.iter().all(|s| s.slack >= -tol);
    DsicReport {
        dsic_ok,
        monotone_ok,
        dsic_slacks,
    }
}

/// Participation constraints against the outside option
/// `max(i vbar - p, 0)`.
pub fn verify_ir(taxes: &TaxSchedule, vbar: f64, price: f64, tol: f64) -> IrReport {
    let low = -taxes.t0 - (vbar - price).max(0.0);
    let high = taxes.q1 - taxes.t0 - (2.0 * vbar - price).max(0.0);
    IrReport {
        ir_ok: low >= -tol && high >= -tol,
        ir_slacks: [low, high],
    }
}

/// Expected tax per unit time, `lambda (P1 t1 + P2 t2)`. With a uniform
/// prior this is `lambda (t0 + q2)`.
pub fn revenue(taxes: &TaxSchedule, lambda: f64, low_prior: f64) -> f64 {
    if low_prior == 0.5 {
        lambda * (taxes.t0 + taxes.q2)
    } else {
        lambda * (low_prior * taxes.t1 + (1.0 - low_prior) * taxes.t2)
    }
}

/// Upper bound on revenue without a designer: only high types join, at price `p`.
pub fn outside_option_revenue(lambda: f64, price: f64) -> f64 {
    lambda * price / 2.0
}
