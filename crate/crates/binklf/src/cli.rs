//! `binklf run | mc | verify | scenarios`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use binklf_core::simulate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::filters::run_filter;
use crate::montecarlo::{run_monte_carlo, McOptions};
use crate::oracles::{self, OracleOutcome};
use crate::output;
use crate::scenarios::{self, Scenario, ScenarioOptions, SCENARIOS};

#[derive(Debug, Parser)]
#[command(
    name = "binklf",
    version,
    about = "Kalman-like filters for binary-sensor systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory and write the filter trace to trace.csv.
    Run(RunArgs),
    /// Monte Carlo comparison; writes rmse.csv, mk.csv, timing.csv and summary.json.
    Mc(McArgs),
    /// Run the oracle suites.
    Verify(VerifyArgs),
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Built-in scenario name.
    #[arg(long)]
    pub scenario: Option<String>,
    /// TOML file with run and scenario keys; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub beta_factor: Option<f64>,
    #[arg(long)]
    pub xi_factor: Option<f64>,
    #[arg(long)]
    pub ut_a: Option<f64>,
    #[arg(long)]
    pub ut_b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub ut_kappa: Option<f64>,
    /// Exhaled CO2 partial pressure (O2 scenarios).
    #[arg(long)]
    pub e_co2: Option<f64>,
    /// Input offset replacing the calibrated one (O2 scenarios).
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    /// Use the O2 constants without calibration.
    #[arg(long)]
    pub literal: bool,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0_true: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0_hat: Option<Vec<f64>>,
    /// Initial covariance as a multiple of the identity.
    #[arg(long, allow_hyphen_values = true)]
    pub phi0: Option<f64>,
}

impl Overrides {
    fn options(&self) -> ScenarioOptions {
        ScenarioOptions {
            e_co2: self.e_co2,
            calibration_offset: self.offset,
            literal: self.literal,
            thresholds: self.thresholds.clone(),
            x0_true: self.x0_true.clone(),
            x0_hat: self.x0_hat.clone(),
            phi0: self.phi0,
            beta_factor: self.beta_factor,
            xi_factor: self.xi_factor,
            ut_a: self.ut_a,
            ut_b: self.ut_b,
            ut_kappa: self.ut_kappa,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
    /// Filter to trace; defaults to the scenario's binary filter.
    #[arg(long)]
    pub filter: Option<String>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated filters; defaults to the scenario's comparison set.
    #[arg(long, value_delimiter = ',')]
    pub filters: Option<Vec<String>>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Worker threads (overrides BINKLF_THREADS).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Dominance,
    Gain,
    Params,
    Affine,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Random Δ samples per dominance instance.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Instances per suite; defaults to 50 (dominance, affine) and 20 (gain, params).
    #[arg(long)]
    pub instances: Option<usize>,
    /// Finite-difference directions per gain instance.
    #[arg(long, default_value_t = 50)]
    pub directions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<'a, I, T>(args: I, stdout: &'a mut dyn Write, stderr: &'a mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let sink = if code == 0 { stdout } else { stderr };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, stdout: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Scenarios => {
            for (name, about) in SCENARIOS {
                writeln!(stdout, "{name:<12} {about}")?;
            }
            Ok(0)
        }
        Command::Run(args) => run_trace(args, stdout).map(|_| 0),
        Command::Mc(args) => run_mc(args, stdout).map(|_| 0),
        Command::Verify(args) => run_verify(&args, stdout),
    }
}

fn resolve(common: &Common, extra: RunConfig) -> Result<(RunConfig, Scenario)> {
    let file = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        scenario: common.scenario.clone(),
        steps: common.steps,
        seed: common.seed,
        out: common.out.clone(),
        options: common.overrides.options(),
        ..extra
    };
    let cfg = file.merged(flags);
    cfg.validate()?;
    let name = cfg.scenario.clone().ok_or_else(|| {
        HarnessError::Config("no scenario given (use --scenario or a config file)".into())
    })?;
    let scenario = scenarios::build(&name, &cfg.options)?;
    Ok((cfg, scenario))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn run_trace(args: RunArgs, stdout: &mut dyn Write) -> Result<()> {
    let extra = RunConfig {
        filters: args.filter.map(|f| vec![f]),
        ..Default::default()
    };
    let (cfg, scenario) = resolve(&args.common, extra)?;
    let kind = match cfg.filter_kinds()? {
        Some(kinds) if kinds.len() == 1 => kinds[0],
        Some(_) => {
            return Err(HarnessError::Config(
                "`run` traces exactly one filter".into(),
            ))
        }
        None => scenario.primary_filter(),
    };
    let steps = cfg.steps.unwrap_or_else(|| scenario.default_steps());
    let seed = cfg.seed.unwrap_or(0);
    let traj = simulate(
        scenario.model.as_system(),
        &scenario.inputs(steps),
        &scenario.x0_true,
        seed,
        steps,
    )?;
    let run = run_filter(&scenario, kind, &traj)?;
    let path = out_dir(&cfg)?.join("trace.csv");
    output::write_trace(&path, &traj, &run)?;
    let mean_mk = run.sensors_used.iter().sum::<usize>() as f64 / steps as f64;
    writeln!(
        stdout,
        "{}: {kind} over {steps} steps, seed {seed}, mean m_k {mean_mk:.3} -> {}",
        scenario.name,
        path.display()
    )?;
    Ok(())
}

fn run_mc(args: McArgs, stdout: &mut dyn Write) -> Result<()> {
    let extra = RunConfig {
        filters: args.filters,
        runs: args.runs,
        threads: args.threads,
        ..Default::default()
    };
    let (cfg, scenario) = resolve(&args.common, extra)?;
    let kinds = cfg
        .filter_kinds()?
        .unwrap_or_else(|| scenario.default_filters.clone());
    let mut opts = McOptions::new(
        cfg.runs.unwrap_or(100),
        cfg.steps.unwrap_or_else(|| scenario.default_steps()),
        cfg.seed.unwrap_or(0),
    );
    opts.threads = cfg.threads;
    let report = run_monte_carlo(&scenario, &kinds, &opts)?;
    let dir = out_dir(&cfg)?;
    output::write_mc(&dir, &report)?;
    writeln!(
        stdout,
        "{}: {} runs x {} steps, seed {}, {} failed -> {}",
        report.scenario,
        report.runs,
        report.steps,
        report.base_seed,
        report.failures.len(),
        dir.display()
    )?;
    for f in &report.filters {
        writeln!(
            stdout,
            "  {:<12} mean rmse {:.4}  mean m_k {:.3}  {:.3e} s/step",
            f.kind.name(),
            f.mean_rmse(1, report.steps),
            f.overall_mean_sensors_used(),
            f.mean_step_seconds
        )?;
    }
    Ok(())
}

fn run_verify(args: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32> {
    let wants = |s: Suite| args.suite == Suite::All || args.suite == s;
    let n = |default: usize| args.instances.unwrap_or(default);
    let mut outcomes: Vec<OracleOutcome> = Vec::new();
    if wants(Suite::Dominance) {
        outcomes.push(oracles::dominance_suite(n(50), args.samples, args.seed)?);
    }
    if wants(Suite::Gain) {
        outcomes.push(oracles::gain_suite(n(20), args.directions, args.seed)?);
    }
    if wants(Suite::Params) {
        outcomes.push(oracles::params_suite(n(20), args.seed)?);
    }
    if wants(Suite::Affine) {
        outcomes.push(oracles::affine_suite(n(50), args.seed)?);
    }
    let mut code = 0;
    for o in &outcomes {
        let verdict = if o.passed() { "PASS" } else { "FAIL" };
        writeln!(
            stdout,
            "{verdict} {:<9} checks={} worst/tol={:.3e} ({})",
            o.suite, o.checks, o.worst_ratio, o.detail
        )?;
        if !o.passed() {
            code = 1;
        }
    }
    Ok(code)
}
