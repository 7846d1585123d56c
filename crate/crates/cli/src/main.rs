//! Command-line front end: `popdyn <simulate|solve|converge|check|fit>`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use popdyn::harness::{
    deterministic_solution, exceedance_probe, fit_rate, load_table, report, run_convergence, summary, write_json,
    write_solution_csv, write_trajectory_csv, Correction, ExperimentPlan, ModelSpec, Outputs,
};
use popdyn::moments::{check_assumptions, sample_states};
use popdyn::ode::xi_sup;
use popdyn::ssa::{simulate, uniform_grid, SimConfig};
use popdyn::PopulationModel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const USAGE: u8 = 1;
const RUNTIME: u8 = 2;
const VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "popdyn", version, about = "Density-dependent population processes and their deterministic limits")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment plan (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, env = "POPDYN_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_parser = ["kretzschmar", "arrigoni", "finite"])]
    model: Option<String>,
    /// System size(s); a comma-separated list sets the convergence grid.
    #[arg(long = "N", global = true, value_delimiter = ',')]
    n: Vec<u64>,
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// Time horizon.
    #[arg(long = "T", global = true)]
    t_end: Option<f64>,
    /// Relative tolerance of the deterministic solver.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate sample paths and write `trajectory.csv`.
    Simulate,
    /// Solve the limit equation and write `solution.csv`.
    Solve {
        /// Number of equally spaced output intervals.
        #[arg(long, default_value_t = 100)]
        points: usize,
    },
    /// Measure sup-errors along the N grid and fit the rate.
    Converge {
        #[arg(long, default_value = "sqrt-log")]
        correction: Correction,
    },
    /// Check the model assumptions on sampled states.
    Check {
        /// Number of sampled states.
        #[arg(long, default_value_t = 100)]
        states: usize,
    },
    /// Refit the rate from a saved convergence run.
    Fit {
        /// Directory written by `converge` (defaults to --out).
        dir: Option<PathBuf>,
        #[arg(long, default_value = "sqrt-log")]
        correction: Correction,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<popdyn::Error>() {
            Some(popdyn::Error::Config(_) | popdyn::Error::InvalidParam(_)) => USAGE,
            _ => RUNTIME,
        };
        Self { code, error }
    }
}

impl From<popdyn::Error> for Failure {
    fn from(e: popdyn::Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Simulate => cmd_simulate(&plan(c, 1)?, c.replicates.unwrap_or(1)),
        Command::Solve { points } => cmd_solve(&plan(c, 1)?, *points),
        Command::Converge { correction } => cmd_converge(&plan(c, 200)?, *correction),
        Command::Check { states } => cmd_check(&plan(c, 1)?, *states),
        Command::Fit { dir, correction } => {
            let dir = dir.clone().or_else(|| c.out.clone()).context("fit needs a run directory")?;
            cmd_fit(&dir, *correction)
        }
    }
}

/// The plan from `--config` (or defaults), with command-line overrides applied.
fn plan(c: &Common, default_replicates: usize) -> Result<ExperimentPlan, Failure> {
    let mut plan = match &c.config {
        Some(path) => ExperimentPlan::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentPlan { replicates: default_replicates, ..ExperimentPlan::default() },
    };
    if let Some(m) = &c.model {
        if m != plan.model.name() {
            plan.model = ModelSpec::by_name(m)?;
            if c.config.is_some() {
                plan.initial.clear();
            }
        }
    }
    if !c.n.is_empty() {
        plan.n_grid = c.n.clone();
    }
    if let Some(r) = c.replicates {
        plan.replicates = r;
    }
    if let Some(t) = c.t_end {
        plan.t_end = t;
    }
    if let Some(s) = c.seed {
        plan.seed = s;
    }
    if let Some(t) = c.threads {
        plan.threads = t;
    }
    if let Some(tol) = c.tol {
        plan.solver.rtol = tol;
    }
    if let Some(out) = &c.out {
        plan.output_dir = Some(out.clone());
    }
    plan.validate()?;
    Ok(plan)
}

fn out_dir(plan: &ExperimentPlan) -> anyhow::Result<PathBuf> {
    let dir = plan.output_dir.clone().unwrap_or_else(|| PathBuf::from("popdyn-out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn cmd_simulate(plan: &ExperimentPlan, replicates: usize) -> Result<u8, Failure> {
    let model = plan.model.build()?;
    let n = *plan.n_grid.first().expect("validated plan has an N");
    let x0 = plan.initial_state(n);
    let dir = out_dir(plan)?;
    for i in 0..replicates {
        let cfg = SimConfig {
            tracked_r: vec![0, 1, 2],
            store_events: false,
            ..SimConfig::new(n, plan.t_end, plan.seed.wrapping_add(i as u64))
        };
        let sim = simulate(&model, &x0, &cfg)?;
        let name = if replicates == 1 { "trajectory.csv".to_string() } else { format!("trajectory_{i}.csv") };
        write_trajectory_csv(&dir.join(&name), &sim)?;
        println!("{name}: {} events, seed {}", sim.trajectory.event_count, cfg.seed);
    }
    std::fs::write(dir.join("config.toml"), plan.to_toml()?).context("writing config.toml")?;
    Ok(0)
}

fn cmd_solve(plan: &ExperimentPlan, points: usize) -> Result<u8, Failure> {
    let model = plan.model.build()?;
    let sol = deterministic_solution(&model, plan)?;
    let dir = out_dir(plan)?;
    write_solution_csv(&dir.join("solution.csv"), &sol, &uniform_grid(plan.t_end, points.max(1)))?;
    std::fs::write(dir.join("config.toml"), plan.to_toml()?).context("writing config.toml")?;
    println!(
        "{}: T = {}, {} steps, K = {}, sup mu-norm {:.6}",
        model.name(),
        plan.t_end,
        sol.steps(),
        sol.k,
        xi_sup(&sol)
    );
    Ok(0)
}

fn cmd_converge(plan: &ExperimentPlan, correction: Correction) -> Result<u8, Failure> {
    let mut table = run_convergence(plan)?;
    let fit = if table.rows.len() >= 4 {
        match fit_rate(&table, correction) {
            Ok(f) => Some(f),
            Err(e) => {
                table.warnings.push(format!("rate fit skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    if let Some(f) = &fit {
        table.k1 = Some(f.prefactor());
        table.calibrate(2.0 * f.prefactor());
    }
    let multipliers: Vec<f64> = (0..=20).map(|i| 0.25 * i as f64).collect();
    let ex = exceedance_probe(&table, &multipliers);
    let dir = out_dir(plan)?;
    report(plan, &Outputs { table: Some(&table), fit: fit.as_ref(), exceedance: Some(&ex) }, &dir)?;
    print!("{}", summary(&table, fit.as_ref()));

    let incomplete = table.rows.len() < plan.n_grid.len() || table.rows.iter().any(|r| !r.is_complete());
    let decreasing = table.rows.windows(2).all(|w| w[1].mean_sup_err < w[0].mean_sup_err);
    if incomplete || !decreasing {
        eprintln!("property violation: {}", if incomplete { "incomplete rows" } else { "errors not decreasing in N" });
        return Ok(VIOLATION);
    }
    Ok(0)
}

fn cmd_check(plan: &ExperimentPlan, count: usize) -> Result<u8, Failure> {
    let model = plan.model.build()?;
    let n = *plan.n_grid.first().expect("validated plan has an N");
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let states = sample_states(&model, &mut rng, n, count, 30);
    let rep = check_assumptions(&model, &states, n, &[0, 1, 2, 3])?;
    println!("{} (N = {n}, {} states)", model.name(), states.len());
    for c in &rep.conditions {
        println!(
            "  {:<18} {:<4} margin {:>12.4e}  {}/{} violations",
            c.name,
            if c.passed { "ok" } else { "FAIL" },
            c.worst_margin,
            c.violations,
            c.evaluated
        );
    }
    Ok(if rep.all_passed() { 0 } else { VIOLATION })
}

fn cmd_fit(dir: &Path, correction: Correction) -> Result<u8, Failure> {
    let table = load_table(dir).with_context(|| format!("loading run from {}", dir.display()))?;
    if table.rows.len() < 4 {
        return Err(popdyn::Error::DegenerateFit(format!("{} rows, need at least 4", table.rows.len())).into());
    }
    let fit = fit_rate(&table, correction)?;
    write_json(&dir.join("fit.json"), &fit)?;
    println!(
        "slope {:.4}  CI [{:.4}, {:.4}]  intercept {:.4}",
        fit.slope, fit.ci.0, fit.ci.1, fit.intercept
    );
    Ok(0)
}
