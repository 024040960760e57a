//! Revenue-maximising recommendation policies and tax schedules for an
//! M/M/1 queue whose backlog is hidden from arriving users.
//!
//! An information designer sees the backlog, sells join/leave
//! recommendations to users of two private types, and charges a tax that
//! depends on the reported type. The crate solves the designer's problem
//! as a linear program over occupation measures, recovers the policy and
//! tax schedule, and checks the result analytically and by simulation.

pub mod cli;
pub mod incentives;
pub mod lp_builder;
pub mod model;
pub mod simplex;
pub mod simulator;
pub mod stationary;
pub mod structure;

pub use lp_builder::{solve_design, DesignError, DesignSolution};
pub use model::{ModelConfig, Policy, RewardFn, TaxSchedule, UserType};
pub use simplex::{LpProblem, LpSolution, LpStatus, SolveOptions};
