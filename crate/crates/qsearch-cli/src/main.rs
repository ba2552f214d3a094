//! `qsearch` — threshold queries, table reproduction, posterior-process
//! simulation, epsilon-optimal planning, and Monte Carlo risk checks for
//! the continuous-time Bayesian quickest-search problem.
//!
//! Exit codes: 0 success, 1 runtime/convergence failure, 2 usage error.
//! All seeded commands are bit-reproducible; the `SEED` environment
//! variable overrides the default seed 0 when `--seed` is absent.

mod output;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qsearch_core::analysis;
use qsearch_core::model::{self, ModelParams};
use qsearch_core::sde::{self, SimGrid};
use qsearch_core::search::{self, StrategyConfig};
use qsearch_core::stats;
use qsearch_core::Error as CoreError;

use output::{sig6, SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "qsearch",
    about = "Bayesian quickest search: explicit thresholds, posterior simulators, bound checks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the free-boundary problem: pi*, A, B for given c and prior.
    Threshold(ThresholdArgs),
    /// Reproduce one of the reference threshold tables (ids 1-4).
    Table(TableArgs),
    /// Simulate posterior processes or full search trials.
    Simulate(SimulateArgs),
    /// Epsilon-optimal planning: time bound and switching trigger offset.
    Plan(PlanArgs),
    /// Monte Carlo risk of the reflected threshold rule vs the analytic value.
    Risk(RiskArgs),
}

#[derive(Args)]
struct ThresholdArgs {
    /// Observation cost per unit time (> 0).
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    /// Prior probability of a drift-1 channel, in (0,1).
    #[arg(long = "pi-hat", allow_negative_numbers = true)]
    pi_hat: f64,
    /// Root-finder tolerance.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args)]
struct TableArgs {
    /// Table id: 1 (pi* vs c at prior .5), 2 (at .75), 3 (pi* vs prior at
    /// c=.01), 4 (at c=.03).
    #[arg(long)]
    id: u8,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Raw posterior diffusion from the prior.
    Plain,
    /// Posterior reflected at the prior.
    Reflected,
    /// Impulse posterior: reset to the prior from prior - eps.
    Impulse,
    /// Shared-noise coupled pair (Y, Y^eps).
    Coupled,
    /// Full multi-channel search trials.
    Search,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Plain => "plain",
            Mode::Reflected => "reflected",
            Mode::Impulse => "impulse",
            Mode::Coupled => "coupled",
            Mode::Search => "search",
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    #[arg(long = "pi-hat", allow_negative_numbers = true)]
    pi_hat: f64,
    /// Impulse/coupled offset, or the switching trigger eps2 for search mode.
    #[arg(long, allow_negative_numbers = true)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    dt: f64,
    /// Simulated horizon for the path modes (default 1.0).
    #[arg(long, allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Number of paths (or trials in search mode).
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// RNG seed; falls back to the SEED env var, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Write a path dump (stream 0) or the full trial log as CSV.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Root-finder tolerance (search mode).
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    /// Safety horizon for search trials; default 1e4 * E[tau].
    #[arg(long = "max-time")]
    max_time: Option<f64>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    #[arg(long = "pi-hat", allow_negative_numbers = true)]
    pi_hat: f64,
    /// Overall optimality gap the plan must achieve.
    #[arg(long = "eps-target", allow_negative_numbers = true)]
    eps_target: f64,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long, allow_negative_numbers = true)]
    c: f64,
    #[arg(long = "pi-hat", allow_negative_numbers = true)]
    pi_hat: f64,
    #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
    dt: f64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
}

/// Command failure carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(err: CoreError) -> Self {
        match err {
            CoreError::InvalidParameter { .. } | CoreError::OutOfDomain { .. } => {
                Failure::usage(err.to_string())
            }
            _ => Failure::runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::runtime(format!("i/o error: {err}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Threshold(args) => cmd_threshold(&args),
        Command::Table(args) => cmd_table(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Plan(args) => cmd_plan(&args),
        Command::Risk(args) => cmd_risk(&args),
    };
    match result {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .map_err(|_| Failure::usage(format!("SEED env var `{raw}` is not a valid u64"))),
        Err(_) => Ok(0),
    }
}

fn model_params(c: f64, pi_hat: f64) -> Result<ModelParams, Failure> {
    ModelParams::new(c, pi_hat).map_err(|e| Failure::usage(format!("{e} (flags --c / --pi-hat)")))
}

// --- threshold ---

fn cmd_threshold(args: &ThresholdArgs) -> Result<String, Failure> {
    let params = model_params(args.c, args.pi_hat)?;
    let sol = model::solve_threshold(&params, args.tol)?;
    if sol.near_prior() {
        eprintln!("warning: pi_star - pi_hat < 1e-6; the threshold is numerically at the prior");
    }
    let record = output::ThresholdRecord {
        schema: SCHEMA_VERSION,
        command: "threshold",
        c: args.c,
        pi_hat: args.pi_hat,
        tol: args.tol,
        pi_star: sig6(sol.pi_star),
        a_bar: sig6(sol.a_bar),
        b_bar: sig6(sol.b_bar),
        value_at_prior: sig6(sol.value(params.prior).unwrap_or(f64::NAN)),
        near_prior_warning: sol.near_prior(),
    };
    Ok(match args.format {
        Format::Json => output::to_json(&record),
        Format::Csv => output::key_value_csv(&[
            ("c", format!("{}", args.c)),
            ("pi_hat", format!("{}", args.pi_hat)),
            ("tol", format!("{:e}", args.tol)),
            ("pi_star", format!("{}", sig6(sol.pi_star))),
            ("a_bar", format!("{}", sig6(sol.a_bar))),
            ("b_bar", format!("{}", sig6(sol.b_bar))),
            (
                "value_at_prior",
                format!("{}", sig6(sol.value(params.prior).unwrap_or(f64::NAN))),
            ),
        ]),
    })
}

// --- table ---

struct TableSpec {
    table_id: u8,
    fixed_param: &'static str,
    fixed_value: f64,
    sweep_param: &'static str,
    sweep: &'static [f64],
}

const COST_SWEEP: [f64; 12] = [
    0.0025, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.1,
];
const PRIOR_SWEEP: [f64; 12] = [
    0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95,
];

fn table_spec(id: u8) -> Option<TableSpec> {
    match id {
        1 => Some(TableSpec {
            table_id: 1,
            fixed_param: "pi_hat",
            fixed_value: 0.5,
            sweep_param: "c",
            sweep: &COST_SWEEP,
        }),
        2 => Some(TableSpec {
            table_id: 2,
            fixed_param: "pi_hat",
            fixed_value: 0.75,
            sweep_param: "c",
            sweep: &COST_SWEEP,
        }),
        3 => Some(TableSpec {
            table_id: 3,
            fixed_param: "c",
            fixed_value: 0.01,
            sweep_param: "pi_hat",
            sweep: &PRIOR_SWEEP,
        }),
        4 => Some(TableSpec {
            table_id: 4,
            fixed_param: "c",
            fixed_value: 0.03,
            sweep_param: "pi_hat",
            sweep: &PRIOR_SWEEP,
        }),
        _ => None,
    }
}

fn cmd_table(args: &TableArgs) -> Result<String, Failure> {
    let spec = table_spec(args.id)
        .ok_or_else(|| Failure::usage(format!("--id {} is not a known table (1-4)", args.id)))?;
    let mut rows = Vec::with_capacity(spec.sweep.len());
    for &v in spec.sweep {
        let (c, prior) = if spec.sweep_param == "c" {
            (v, spec.fixed_value)
        } else {
            (spec.fixed_value, v)
        };
        let sol = model::solve_threshold(&ModelParams::new(c, prior)?, 1e-12)?;
        rows.push((v, sol.pi_star));
    }
    Ok(match args.format {
        Format::Csv => {
            let mut out = format!("{},pi_star\n", spec.sweep_param);
            for (v, ps) in rows {
                out.push_str(&format!("{},{}\n", v, output::dec3(ps)));
            }
            out
        }
        Format::Json => {
            let record = output::TableRecord {
                schema: SCHEMA_VERSION,
                command: "table",
                table_id: spec.table_id,
                fixed_param: spec.fixed_param,
                fixed_value: spec.fixed_value,
                sweep_param: spec.sweep_param,
                rows: rows
                    .into_iter()
                    .map(|(v, ps)| {
                        let rounded = output::dec3(ps).parse::<f64>().expect("dec3 emits floats");
                        if spec.sweep_param == "c" {
                            output::TableRow {
                                c: Some(v),
                                pi_hat: None,
                                pi_star: rounded,
                            }
                        } else {
                            output::TableRow {
                                c: None,
                                pi_hat: Some(v),
                                pi_star: rounded,
                            }
                        }
                    })
                    .collect(),
            };
            output::to_json(&record)
        }
    })
}

// --- simulate ---

fn require_eps(args: &SimulateArgs) -> Result<f64, Failure> {
    args.eps
        .ok_or_else(|| Failure::usage(format!("--eps is required for mode {}", args.mode.name())))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<String, Failure> {
    let params = model_params(args.c, args.pi_hat)?;
    let seed = resolve_seed(args.seed)?;
    if args.n < 2 {
        return Err(Failure::usage("--n must be at least 2".to_string()));
    }
    // Mode-consistent flags only.
    if matches!(args.mode, Mode::Plain | Mode::Reflected) && args.eps.is_some() {
        return Err(Failure::usage(format!(
            "--eps is not used by mode {}",
            args.mode.name()
        )));
    }
    if args.mode != Mode::Search && args.max_time.is_some() {
        return Err(Failure::usage(
            "--max-time applies only to mode search".to_string(),
        ));
    }
    if args.mode == Mode::Search && args.horizon.is_some() {
        return Err(Failure::usage(
            "--horizon is not used by mode search; trials run to the threshold (see --max-time)"
                .to_string(),
        ));
    }
    match args.mode {
        Mode::Plain | Mode::Reflected | Mode::Impulse => path_modes(args, &params, seed),
        Mode::Coupled => coupled_mode(args, &params, seed),
        Mode::Search => search_mode(args, &params, seed),
    }
}

fn path_modes(args: &SimulateArgs, params: &ModelParams, seed: u64) -> Result<String, Failure> {
    let horizon = args.horizon.unwrap_or(1.0);
    let grid = SimGrid::new(args.dt, horizon, seed)?;
    let eps = match args.mode {
        Mode::Impulse => Some(require_eps(args)?),
        _ => None,
    };
    let simulate = |idx: u64| -> Result<sde::PathSample, CoreError> {
        match args.mode {
            Mode::Plain => sde::simulate_unreflected_stream(params, &grid, params.prior, idx),
            Mode::Reflected => sde::simulate_reflected_stream(params, &grid, idx),
            Mode::Impulse => sde::simulate_impulse_stream(params, eps.unwrap(), &grid, idx),
            _ => unreachable!(),
        }
    };
    let mut terminals = Vec::with_capacity(args.n);
    let mut min_value = f64::INFINITY;
    let mut regs = Vec::with_capacity(args.n);
    let mut impulse_counts = Vec::with_capacity(args.n);
    let mut identity_ok = true;
    let mut dump: Option<sde::PathSample> = None;
    for idx in 0..args.n as u64 {
        let path = simulate(idx)?;
        terminals.push(path.terminal());
        min_value = min_value.min(path.values.iter().copied().fold(f64::INFINITY, f64::min));
        let reg_end = *path.regulator.last().unwrap();
        regs.push(reg_end);
        impulse_counts.push(path.impulses.len() as f64);
        if let Some(e) = eps {
            if args.mode == Mode::Impulse && reg_end != e * path.impulses.len() as f64 {
                identity_ok = false;
            }
        }
        if idx == 0 && args.out.is_some() {
            dump = Some(path);
        }
    }
    if let (Some(path), Some(out)) = (&dump, &args.out) {
        let mut w = BufWriter::new(File::create(out)?);
        path.write_csv(&mut w)?;
        w.flush()?;
    }
    let record = output::PathSummary {
        schema: SCHEMA_VERSION,
        command: "simulate",
        mode: args.mode.name().to_string(),
        c: args.c,
        pi_hat: args.pi_hat,
        eps,
        dt: args.dt,
        horizon,
        n: args.n,
        seed,
        terminal_mean: sig6(stats::mean(&terminals)),
        terminal_se: sig6(stats::standard_error(&terminals)),
        terminal_min: sig6(terminals.iter().copied().fold(f64::INFINITY, f64::min)),
        terminal_max: sig6(terminals.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        min_value: sig6(min_value),
        mean_regulator: sig6(stats::mean(&regs)),
        mean_impulses: (args.mode == Mode::Impulse).then(|| sig6(stats::mean(&impulse_counts))),
        regulator_identity_ok: (args.mode == Mode::Impulse).then_some(identity_ok),
    };
    Ok(output::to_json(&record))
}

fn coupled_mode(args: &SimulateArgs, params: &ModelParams, seed: u64) -> Result<String, Failure> {
    let eps = require_eps(args)?;
    let horizon = args.horizon.unwrap_or(1.0);
    let grid = SimGrid::new(args.dt, horizon, seed)?;
    let mut sup_sq = Vec::with_capacity(args.n);
    let mut sup_x_sq = Vec::with_capacity(args.n);
    let mut reg_max = 0.0f64;
    for idx in 0..args.n as u64 {
        let st = sde::coupled_stats(params, eps, horizon, args.dt, seed, idx)?;
        sup_sq.push(st.sup_y_diff * st.sup_y_diff);
        sup_x_sq.push(st.sup_x_diff * st.sup_x_diff);
        reg_max = reg_max.max(st.sup_reg_diff);
    }
    if let Some(out) = &args.out {
        let sample = sde::simulate_coupled_stream(params, eps, &grid, 0)?;
        let mut w = BufWriter::new(File::create(out)?);
        writeln!(
            w,
            "t,y_value,y_regulator,yeps_value,yeps_regulator,event_flag"
        )?;
        let mut events = sample.y_eps.impulses.iter().peekable();
        for i in 0..sample.y.times.len() {
            let flag = if events.peek() == Some(&&i) {
                events.next();
                1
            } else {
                0
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                sample.y.times[i],
                sample.y.values[i],
                sample.y.regulator[i],
                sample.y_eps.values[i],
                sample.y_eps.regulator[i],
                flag
            )?;
        }
        w.flush()?;
    }
    let record = output::CoupledSummary {
        schema: SCHEMA_VERSION,
        command: "simulate",
        mode: "coupled".to_string(),
        c: args.c,
        pi_hat: args.pi_hat,
        eps,
        dt: args.dt,
        horizon,
        n: args.n,
        seed,
        mean_sup_diff_sq: sig6(stats::mean(&sup_sq)),
        mean_sup_x_diff_sq: sig6(stats::mean(&sup_x_sq)),
        sup_reg_diff_max: sig6(reg_max),
        reg_within_eps: reg_max <= eps,
    };
    Ok(output::to_json(&record))
}

fn search_mode(args: &SimulateArgs, params: &ModelParams, seed: u64) -> Result<String, Failure> {
    let eps2 = require_eps(args)?;
    let sol = model::solve_threshold(params, args.tol)?;
    let expected_tau = analysis::expected_hitting_time(params.prior, params.prior, sol.pi_star)?;
    let max_time = args
        .max_time
        .unwrap_or_else(|| StrategyConfig::default_max_time(expected_tau));
    let cfg = StrategyConfig::new(params, sol.pi_star, eps2, args.dt, max_time)
        .map_err(|e| Failure::usage(e.to_string()))?;
    let report = search::estimate_search_risk(params, &cfg, args.n, seed)?;
    if let Some(out) = &args.out {
        let mut w = BufWriter::new(File::create(out)?);
        writeln!(w, "trial,tau,switches,chosen_theta,cost,truncated")?;
        for i in 0..args.n as u64 {
            // Re-running each stream keeps the log exactly consistent with
            // the aggregate estimate above.
            let o = search::run_search_trial_stream(params, &cfg, seed, i)?;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i, o.tau, o.switches, o.chosen_theta, o.cost, o.truncated
            )?;
        }
        w.flush()?;
    }
    let f_prior = sol.value(params.prior).unwrap_or(f64::NAN);
    let record = output::SearchSummary {
        schema: SCHEMA_VERSION,
        command: "simulate",
        mode: "search".to_string(),
        c: args.c,
        pi_hat: args.pi_hat,
        eps2,
        dt: args.dt,
        n: args.n,
        seed,
        pi_star: sig6(sol.pi_star),
        max_time: sig6(max_time),
        mean_cost: sig6(report.cost.mean),
        std_err: sig6(report.cost.std_err),
        p_wrong: sig6(report.p_wrong),
        mean_tau: sig6(report.mean_tau),
        mean_switches: sig6(report.mean_switches),
        truncated_trials: report.truncated_trials,
        analytic_value: sig6(f_prior),
        rel_gap: sig6((report.cost.mean - f_prior) / f_prior),
    };
    Ok(output::to_json(&record))
}

// --- plan ---

fn cmd_plan(args: &PlanArgs) -> Result<String, Failure> {
    let params = model_params(args.c, args.pi_hat)?;
    if !(args.eps_target > 0.0 && args.eps_target < 1.0) {
        return Err(Failure::usage(format!(
            "--eps-target {} must lie in (0, 1)",
            args.eps_target
        )));
    }
    let record = match analysis::plan_epsilon_optimal(&params, args.eps_target) {
        Ok(plan) => output::PlanRecord {
            schema: SCHEMA_VERSION,
            command: "plan",
            c: args.c,
            pi_hat: args.pi_hat,
            eps_target: args.eps_target,
            pi_star: sig6(plan.pi_star),
            expected_tau: sig6(plan.expected_tau),
            t_bound: sig6(plan.t_bound),
            feasible: true,
            eps2: Some(sig6(plan.eps2)),
            log10_eps2_required: None,
        },
        Err(CoreError::PlanInfeasible {
            t_bound,
            expected_tau,
            log10_eps2,
        }) => {
            let sol = model::solve_threshold(&params, 1e-12)?;
            output::PlanRecord {
                schema: SCHEMA_VERSION,
                command: "plan",
                c: args.c,
                pi_hat: args.pi_hat,
                eps_target: args.eps_target,
                pi_star: sig6(sol.pi_star),
                expected_tau: sig6(expected_tau),
                t_bound: sig6(t_bound),
                feasible: false,
                eps2: None,
                log10_eps2_required: Some(sig6(log10_eps2)),
            }
        }
        Err(other) => return Err(other.into()),
    };
    Ok(output::to_json(&record))
}

// --- risk ---

fn cmd_risk(args: &RiskArgs) -> Result<String, Failure> {
    let params = model_params(args.c, args.pi_hat)?;
    let seed = resolve_seed(args.seed)?;
    let sol = model::solve_threshold(&params, args.tol)?;
    // A generous horizon only sizes the chunking; paths always run to the
    // threshold.
    let grid = SimGrid::new(args.dt, 1.0f64.max(args.dt * 2.0), seed)?;
    let est = analysis::estimate_risk_reflected(&params, &sol, &grid, args.n)?;
    let f_prior = sol.value(params.prior).unwrap_or(f64::NAN);
    let record = output::RiskRecord {
        schema: SCHEMA_VERSION,
        command: "risk",
        c: args.c,
        pi_hat: args.pi_hat,
        dt: args.dt,
        n: args.n,
        seed,
        pi_star: sig6(sol.pi_star),
        analytic_value: sig6(f_prior),
        mean_cost: sig6(est.mean),
        std_err: sig6(est.std_err),
        rel_gap: sig6((est.mean - f_prior) / f_prior),
    };
    Ok(output::to_json(&record))
}
