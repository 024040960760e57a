//! Command-line front end.
//!
//! `solve` writes `summary.json` and `policy.csv` into the output directory;
//! `verify` and `simulate` read them back. Exit codes: 0 success,
//! 1 verification failure, 2 solver failure, 3 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::incentives::{
    allocations, outside_option_revenue, revenue, verify_dsic, verify_ir, IncentiveReport,
    VERIFY_TOL,
};
use crate::lp_builder::{build_lp, solve_design, DesignSolution, Diagnostics};
use crate::model::{ModelConfig, Policy, TaxSchedule, UserType};
use crate::simplex::SolveOptions;
use crate::simulator::{
    merge, simulate_replicas, tv_distance, Participation, SimOptions, SimStats,
};
use crate::stationary::{expected_reward, StationaryDist, MAX_TAIL_MASS};
use crate::structure::{classify, classify_parts, Case, StructureReport};

pub const SUMMARY_FILE: &str = "summary.json";
pub const POLICY_FILE: &str = "policy.csv";
pub const SIM_REPORT_FILE: &str = "sim_report.json";
pub const SIM_MU_FILE: &str = "sim_mu.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const LP_FILE: &str = "lp.txt";

/// Tolerance for the balance recursion and marginal checks in `verify`.
pub const RECURSION_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "queue-design",
    version,
    about = "Optimal recommendation and tax design for a hidden-backlog queue"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the designer's program and write summary.json and policy.csv.
    Solve(SolveArgs),
    /// Re-check a solve output directory from its files alone.
    Verify(VerifyArgs),
    /// Simulate the queue under a solved policy.
    Simulate(SimulateArgs),
    /// Solve once per price and write sweep.csv.
    Sweep(SweepArgs),
    /// Write the linear program in the plain-text tableau format.
    ExportLp(SolveArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON model config; the built-in reference instance when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub xmax: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Overrides the config price.
    #[arg(long)]
    pub price: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Directory written by `solve`.
    #[arg(long)]
    pub out: PathBuf,
    /// Structure tolerance; defaults to the solved config's.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1e6)]
    pub horizon: f64,
    #[arg(long = "seed", default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,
    /// Let every arrival hear recommendations regardless of IR.
    #[arg(long)]
    pub everyone: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long = "price")]
    pub prices: Vec<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Verification(Vec<String>),
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Usage(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Solver(msg) => write!(f, "solver failure: {msg}"),
            CliError::Verification(failures) => {
                write!(f, "verification failed: {}", failures.join("; "))
            }
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ModelConfig,
    pub revenue: f64,
    pub lp_objective: f64,
    pub t0: f64,
    pub q1: f64,
    pub q2: f64,
    pub t1: f64,
    pub t2: f64,
    pub vbar: f64,
    pub incentives: IncentiveReport,
    pub structure: StructureReport,
    pub outside_option_revenue: f64,
    pub beats_outside_option: bool,
    pub diagnostics: Diagnostics,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn taxes(&self) -> TaxSchedule {
        TaxSchedule {
            t0: self.t0,
            q1: self.q1,
            q2: self.q2,
            t1: self.t1,
            t2: self.t2,
        }
    }
}

/// Written in place of a summary when the solve fails.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailedRun {
    pub config: ModelConfig,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub x: usize,
    pub v_x: f64,
    pub sigma_1: f64,
    pub sigma_2: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub price: f64,
    pub revenue: Option<f64>,
    pub outside_option_revenue: f64,
    pub beats_outside_option: Option<bool>,
    pub case: String,
    pub xtilde: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub seed: u64,
    pub tv_distance: f64,
    pub revenue_rate: f64,
    pub revenue_std_error: f64,
    pub stats: SimStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub horizon: f64,
    pub participation: Participation,
    pub analytic_revenue: f64,
    pub replicas: Vec<ReplicaReport>,
    pub merged_tv_distance: f64,
    pub merged_revenue_rate: f64,
    pub merged_revenue_std_error: f64,
    /// `(empirical - analytic) / standard error` for the pooled run.
    pub revenue_z: f64,
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(args) => cmd_solve(&args).map(|_| ()),
        Command::Verify(args) => {
            let checks = cmd_verify(&args.out, args.tol)?;
            for c in &checks {
                println!("{c}");
            }
            let failures: Vec<String> = checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.to_string())
                .collect();
            if failures.is_empty() {
                Ok(())
            } else {
                Err(CliError::Verification(failures))
            }
        }
        Command::Simulate(args) => {
            let participation = if args.everyone {
                Participation::Everyone
            } else {
                Participation::FollowIr
            };
            let report = cmd_simulate(&args.out, args.horizon, &args.seeds, participation)?;
            println!(
                "revenue {:.6} (analytic {:.6}, z = {:.2}), TV {:.4}",
                report.merged_revenue_rate,
                report.analytic_revenue,
                report.revenue_z,
                report.merged_tv_distance
            );
            Ok(())
        }
        Command::Sweep(args) => {
            let config = load_config(&args.model)?;
            let rows = cmd_sweep(&config, &args.prices, &args.out)?;
            if rows.iter().any(|r| r.revenue.is_none()) {
                return Err(CliError::Solver(
                    "at least one price failed to solve".into(),
                ));
            }
            Ok(())
        }
        Command::ExportLp(args) => {
            let config = solve_config(&args)?;
            let lp = build_lp(&config).map_err(usage)?;
            fs::create_dir_all(&args.out).map_err(usage)?;
            fs::write(args.out.join(LP_FILE), lp.to_text()).map_err(usage)?;
            Ok(())
        }
    }
}

pub fn load_config(args: &ModelArgs) -> Result<ModelConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ModelConfig::reference(0.0),
    };
    if let Some(x_max) = args.xmax {
        config.x_max = x_max;
    }
    if let Some(tol) = args.tol {
        config.tol = tol;
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

fn solve_config(args: &SolveArgs) -> Result<ModelConfig, CliError> {
    let mut config = load_config(&args.model)?;
    if let Some(p) = args.price {
        config.price = p;
        config.validate().map_err(usage)?;
    }
    Ok(config)
}

pub fn summarize(solution: &DesignSolution, solve_seconds: f64, started: Instant) -> RunSummary {
    let config = &solution.config;
    let structure = classify(solution, config.tol).expect("reward covers the solved range");
    let outside = outside_option_revenue(config.lambda, config.price);
    let t = &solution.taxes;
    RunSummary {
        config: config.clone(),
        revenue: solution.revenue,
        lp_objective: solution.objective_value,
        t0: t.t0,
        q1: t.q1,
        q2: t.q2,
        t1: t.t1,
        t2: t.t2,
        vbar: solution.vbar,
        incentives: solution.incentives.clone(),
        structure,
        outside_option_revenue: outside,
        beats_outside_option: solution.revenue > outside,
        diagnostics: solution.diagnostics.clone(),
        timing: Timing {
            solve_seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
        warnings: solution.validation_issues(),
    }
}

pub fn policy_rows(solution: &DesignSolution) -> Vec<PolicyRow> {
    let v = solution
        .reward()
        .values(solution.config.x_max)
        .expect("validated config");
    (0..=solution.config.x_max)
        .map(|x| PolicyRow {
            x,
            v_x: v[x],
            sigma_1: solution.policy.admit(UserType::Low, x),
            sigma_2: solution.policy.admit(UserType::High, x),
            mu: solution.mu.mu[x],
        })
        .collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(usage)?;
    fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(usage)?;
    for row in rows {
        w.serialize(row).map_err(usage)?;
    }
    w.flush().map_err(usage)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<RunSummary, CliError> {
    let started = Instant::now();
    let config = solve_config(args)?;
    fs::create_dir_all(&args.out).map_err(usage)?;
    let solution = match solve_design(&config, &SolveOptions::default()) {
        Ok(s) => s,
        Err(e) => {
            let failed = FailedRun {
                config,
                error: e.to_string(),
            };
            write_json(&args.out.join(SUMMARY_FILE), &failed)?;
            return Err(CliError::Solver(e.to_string()));
        }
    };
    let solve_seconds = started.elapsed().as_secs_f64();
    write_csv(
        &args.out.join(POLICY_FILE),
        &policy_rows(&solution),
        &["x", "v_x", "sigma_1", "sigma_2", "mu"],
    )?;
    let summary = summarize(&solution, solve_seconds, started);
    write_json(&args.out.join(SUMMARY_FILE), &summary)?;
    println!(
        "revenue {:.6} (outside option {:.6}), {}, {} iterations",
        summary.revenue,
        summary.outside_option_revenue,
        summary.structure.case.label(),
        summary.diagnostics.iterations
    );
    if !summary.warnings.is_empty() {
        for w in &summary.warnings {
            eprintln!("warning: {w}");
        }
        return Err(CliError::Verification(summary.warnings.clone()));
    }
    Ok(summary)
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn read_policy(dir: &Path) -> Result<Vec<PolicyRow>, CliError> {
    let path = dir.join(POLICY_FILE);
    let mut r =
        csv::Reader::from_path(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let rows: Vec<PolicyRow> = r
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    if rows.iter().enumerate().any(|(i, row)| row.x != i) {
        return Err(usage(format!(
            "{}: states must run 0, 1, 2, ...",
            path.display()
        )));
    }
    Ok(rows)
}

fn policy_from_rows(rows: &[PolicyRow]) -> Result<Policy, CliError> {
    Policy::new(
        rows.iter().map(|r| r.sigma_1).collect(),
        rows.iter().map(|r| r.sigma_2).collect(),
    )
    .map_err(usage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn states(xs: &[usize]) -> String {
    const SHOWN: usize = 10;
    let mut s: Vec<String> = xs.iter().take(SHOWN).map(|x| x.to_string()).collect();
    if xs.len() > SHOWN {
        s.push(format!("... ({} total)", xs.len()));
    }
    s.join(", ")
}

/// Re-runs the incentive, structure and stationarity checks on a solve
/// output directory. Fails only on unreadable input; check outcomes are
/// returned.
pub fn cmd_verify(dir: &Path, tol: Option<f64>) -> Result<Vec<Check>, CliError> {
    let summary = read_summary(dir)?;
    let rows = read_policy(dir)?;
    let config = &summary.config;
    if rows.len() != config.x_max + 1 {
        return Err(usage(format!(
            "{POLICY_FILE} has {} states but x_max is {}",
            rows.len(),
            config.x_max
        )));
    }
    let tol = tol.unwrap_or(config.tol);
    let policy = policy_from_rows(&rows)?;
    let mu = StationaryDist::from_mu(rows.iter().map(|r| r.mu).collect());
    let v = config.reward.values(config.x_max).map_err(usage)?;
    let mut checks = Vec::new();

    let bad_v: Vec<usize> = rows
        .iter()
        .filter(|r| (r.v_x - v[r.x]).abs() > 1e-12)
        .map(|r| r.x)
        .collect();
    checks.push(check(
        "reward",
        bad_v.is_empty(),
        if bad_v.is_empty() {
            "v_x matches the config".into()
        } else {
            format!("v_x differs from the config at states {}", states(&bad_v))
        },
    ));

    let broken: Vec<usize> = (0..config.x_max)
        .filter(|&x| {
            let expected = config.lambda * mu.mu[x] * policy.mixed_admit(x, 0.5);
            (mu.mu[x + 1] - expected).abs() > RECURSION_TOL
        })
        .collect();
    checks.push(check(
        "recursion",
        broken.is_empty(),
        if broken.is_empty() {
            format!(
                "max residual {:.3e}",
                mu.recursion_residual(&policy, config.lambda, 0.5)
            )
        } else {
            format!(
                "balance fails between x and x+1 at states {}",
                states(&broken)
            )
        },
    ));

    let negative: Vec<usize> = rows.iter().filter(|r| r.mu < 0.0).map(|r| r.x).collect();
    let total = mu.total();
    checks.push(check(
        "mass",
        (total - 1.0).abs() <= RECURSION_TOL && negative.is_empty(),
        if negative.is_empty() {
            format!("sum of mu = {total:.12}")
        } else {
            format!("negative mu at states {}", states(&negative))
        },
    ));

    checks.push(check(
        "truncation",
        mu.tail_mass <= MAX_TAIL_MASS,
        format!("mu(x_max) = {:.3e}", mu.tail_mass),
    ));

    let (q1, q2) = allocations(&policy, &mu, &config.reward).map_err(usage)?;
    let alloc_gap = (q1 - summary.q1).abs().max((q2 - summary.q2).abs());
    checks.push(check(
        "allocation",
        alloc_gap <= RECURSION_TOL,
        format!("recomputed q1 = {q1:.9}, q2 = {q2:.9}; stored differ by {alloc_gap:.3e}"),
    ));

    let taxes = summary.taxes();
    let formula_gap = (taxes.t1 - (taxes.t0 + taxes.q1))
        .abs()
        .max((taxes.t2 - (taxes.t0 + 2.0 * taxes.q2 - taxes.q1)).abs());
    checks.push(check(
        "tax_formula",
        formula_gap <= 1e-9,
        format!("t1, t2 off the offset rule by {formula_gap:.3e}"),
    ));

    let dsic = verify_dsic(&taxes, VERIFY_TOL);
    checks.push(check(
        "dsic",
        dsic.dsic_ok,
        if dsic.monotone_ok {
            format!(
                "slacks {:?}",
                dsic.dsic_slacks.iter().map(|s| s.slack).collect::<Vec<_>>()
            )
        } else {
            format!("q2 = {} < q1 = {}", taxes.q2, taxes.q1)
        },
    ));

    let vbar = expected_reward(&mu, &config.reward).map_err(usage)?;
    let ir = verify_ir(&taxes, vbar, config.price, VERIFY_TOL);
    checks.push(check(
        "ir",
        ir.ir_ok,
        format!("slacks {:?} at vbar = {vbar:.9}", ir.ir_slacks),
    ));

    let expected_revenue = revenue(&taxes, config.lambda, config.type_prior);
    checks.push(check(
        "revenue",
        (expected_revenue - summary.revenue).abs() <= 1e-12 * expected_revenue.abs().max(1.0),
        format!(
            "stored {} vs lambda (t0 + q2) = {expected_revenue}",
            summary.revenue
        ),
    ));

    let structure =
        classify_parts(&policy, &mu.mu, &config.reward, config.lambda, tol).map_err(usage)?;
    let case_ok = structure.case != Case::Indeterminate;
    let detail = if case_ok {
        structure.case.label().to_string()
    } else {
        let xs: Vec<usize> = structure.case1_violations.iter().map(|v| v.x).collect();
        format!("indeterminate; case-1 violations at states {}", states(&xs))
    };
    checks.push(check("structure", case_ok, detail));
    Ok(checks)
}

pub fn cmd_simulate(
    dir: &Path,
    horizon: f64,
    seeds: &[u64],
    participation: Participation,
) -> Result<SimReport, CliError> {
    if seeds.is_empty() {
        return Err(usage("at least one --seed is needed"));
    }
    let summary = read_summary(dir)?;
    let rows = read_policy(dir)?;
    let config = &summary.config;
    let policy = policy_from_rows(&rows)?;
    let analytic: Vec<f64> = rows.iter().map(|r| r.mu).collect();
    let taxes = summary.taxes();
    let options = SimOptions { participation };
    let runs =
        simulate_replicas(config, &policy, &taxes, horizon, seeds, &options).map_err(usage)?;
    let merged = merge(&runs).expect("at least one replica");

    let analytic_revenue = summary.revenue;
    let se = merged.revenue_std_error();
    let report = SimReport {
        horizon,
        participation,
        analytic_revenue,
        replicas: runs
            .into_iter()
            .map(|s| ReplicaReport {
                seed: s.seed,
                tv_distance: tv_distance(&s.empirical_mu, &analytic),
                revenue_rate: s.revenue_rate,
                revenue_std_error: s.revenue_std_error(),
                stats: s,
            })
            .collect(),
        merged_tv_distance: tv_distance(&merged.empirical_mu, &analytic),
        merged_revenue_rate: merged.revenue_rate,
        merged_revenue_std_error: se,
        revenue_z: if se > 0.0 {
            (merged.revenue_rate - analytic_revenue) / se
        } else {
            0.0
        },
    };
    write_json(&dir.join(SIM_REPORT_FILE), &report)?;

    #[derive(Serialize)]
    struct MuRow {
        x: usize,
        mu: f64,
        empirical_mu: f64,
    }
    let mu_rows: Vec<MuRow> = analytic
        .iter()
        .zip(&merged.empirical_mu)
        .enumerate()
        .map(|(x, (&mu, &empirical_mu))| MuRow {
            x,
            mu,
            empirical_mu,
        })
        .collect();
    write_csv(
        &dir.join(SIM_MU_FILE),
        &mu_rows,
        &["x", "mu", "empirical_mu"],
    )?;
    Ok(report)
}

/// Solves each price on its own thread and writes rows in input order.
pub fn cmd_sweep(
    config: &ModelConfig,
    prices: &[f64],
    out: &Path,
) -> Result<Vec<SweepRow>, CliError> {
    for &p in prices {
        if !(p.is_finite() && p >= 0.0) {
            return Err(usage(format!("price must be nonnegative, got {p}")));
        }
    }
    let rows: Vec<SweepRow> = std::thread::scope(|scope| {
        let handles: Vec<_> = prices
            .iter()
            .map(|&price| {
                scope.spawn(move || {
                    let cfg = ModelConfig {
                        price,
                        ..config.clone()
                    };
                    sweep_row(&cfg)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect()
    });
    fs::create_dir_all(out).map_err(usage)?;
    write_csv(
        &out.join(SWEEP_FILE),
        &rows,
        &[
            "price",
            "revenue",
            "outside_option_revenue",
            "beats_outside_option",
            "case",
            "xtilde",
        ],
    )?;
    for r in &rows {
        println!(
            "p = {}: revenue {}, outside option {}, {}",
            r.price,
            r.revenue.map_or("-".into(), |v| format!("{v:.6}")),
            r.outside_option_revenue,
            r.case
        );
    }
    Ok(rows)
}

fn sweep_row(config: &ModelConfig) -> SweepRow {
    let outside = outside_option_revenue(config.lambda, config.price);
    match solve_design(config, &SolveOptions::default()) {
        Ok(solution) => {
            let structure = classify(&solution, config.tol).expect("validated config");
            SweepRow {
                price: config.price,
                revenue: Some(solution.revenue),
                outside_option_revenue: outside,
                beats_outside_option: Some(solution.revenue > outside),
                case: structure.case.label().into(),
                xtilde: structure.xtilde,
            }
        }
        Err(_) => SweepRow {
            price: config.price,
            revenue: None,
            outside_option_revenue: outside,
            beats_outside_option: None,
            case: "solver_failure".into(),
            xtilde: None,
        },
    }
}
