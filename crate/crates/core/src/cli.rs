//! `ded-qopt` command line. Exit codes: 0 success, 1 invalid input or
//! config, 2 runtime failure (including an unconverged depth).

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};
use crate::environment::{DepthCache, EnvError, Environment};
use crate::experiments::{self, CachePool, ExperimentError, SweepSpec, SweptParam};
use crate::export::{self, mm4, ExportError};
use crate::oracle::{self, OracleError, PassPolicy};
use crate::qlearn::{self, QLearnError};
use crate::thermal::{ThermalError, ThermalModel};
use crate::units;

pub const CONFIG_ENV: &str = "DED_QOPT_CONFIG";

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Debug, Parser)]
#[command(name = "ded-qopt", version, about = "Q-learning search for laser power / scan speed giving a target melt-pool depth")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML run config (JSON snapshots also accepted). Missing keys take defaults.
    #[arg(long, env = CONFIG_ENV, value_name = "PATH")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Steady-state melt-pool depth for one (P, v).
    Depth {
        /// Laser power in W.
        #[arg(long, allow_negative_numbers = true)]
        power: f64,
        /// Scan speed in mm/min.
        #[arg(long, allow_negative_numbers = true)]
        speed: f64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Train one agent; writes qtable.csv, qtable.json, convergence.csv, summary.json, config.json.
    Train {
        #[command(flatten)]
        config: ConfigArg,
        /// Overrides qlearn.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: output.dir from the config).
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Evaluate every grid state; writes pv_map.csv, depth_map.csv, config.json.
    Map {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Sweep one hyperparameter over its value list with replicated runs.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// One of: n, epsilon, gamma, alpha, episodes (default: sweep.param from the config).
        #[arg(long)]
        param: Option<SweptParam>,
        /// Replicates per value (default: sweep.replicates).
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ThermalError> for CliError {
    fn from(e: ThermalError) -> Self {
        match e {
            ThermalError::InvalidInput { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::InvalidConfig { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<QLearnError> for CliError {
    fn from(e: QLearnError) -> Self {
        match e {
            QLearnError::InvalidHyperparams { .. } => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidSpec(_) => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn load_config(arg: &ConfigArg) -> Result<RunConfig, CliError> {
    match &arg.config {
        Some(path) => Ok(RunConfig::load(path)?),
        None => Ok(RunConfig::default()),
    }
}

fn out_dir(out: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    out.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn warm_environment(cfg: &RunConfig) -> Result<Environment, CliError> {
    let model = ThermalModel::new(cfg.material_env())?;
    let cache = Arc::new(DepthCache::new(cfg.grid, model)?);
    cache.warm_up()?;
    Ok(Environment::new(cache, cfg.reward_config())?)
}

fn cmd_depth(power: f64, speed: f64, config: &ConfigArg) -> Result<(), CliError> {
    if !(power.is_finite() && power >= 0.0) {
        return Err(CliError::Validation(format!("power: must be a finite value >= 0 W, got {power}")));
    }
    if !(speed.is_finite() && speed > 0.0) {
        return Err(CliError::Validation(format!("speed: must be a finite value > 0 mm/min, got {speed}")));
    }
    let cfg = load_config(config)?;
    let model = ThermalModel::new(cfg.material_env())?;
    let r = model.melt_pool_depth(power, units::mmpm_to_m_s(speed))?;
    say!("power_w      {power}");
    say!("speed_mmpm   {speed}");
    say!("depth_mm     {}", mm4(r.depth_mm));
    say!("converged    {}", r.converged);
    say!("t_used_s     {}", r.t_used);
    say!("x_offset_mm  {}", mm4(r.x_offset_mm));
    if !r.converged {
        return Err(CliError::Runtime(format!(
            "depth did not reach steady state by t = {} s",
            r.t_used
        )));
    }
    Ok(())
}

fn cmd_train(config: &ConfigArg, seed: Option<u64>, out: &Option<PathBuf>) -> Result<(), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(seed) = seed {
        cfg.qlearn.seed = seed;
    }
    let dir = out_dir(out, &cfg);
    let env = warm_environment(&cfg)?;
    let run = qlearn::train(&env, &cfg.hyperparams())?;
    let rc = cfg.reward_config();
    let report = oracle::brute_force_rank(env.cache(), rc.delta_opt_mm, rc.tol_r_mm)?;
    let verdict = oracle::validate_run(
        &report,
        &run,
        experiments::VALIDATION_TOP_K,
        experiments::VALIDATION_DEPTH_TOL_MM,
        PassPolicy::RankOrDepth,
    )?;
    export::write_train(&dir, &cfg, &run, Some(verdict))?;
    say!(
        "best state {} : P = {:.1} W, v = {:.1} mm/min, depth = {} mm (oracle rank {})",
        run.best.state,
        run.best.power_w,
        run.best.speed_mmpm,
        mm4(run.best.depth_mm),
        verdict.oracle_rank
    );
    say!("wrote {}", dir.display());
    Ok(())
}

fn cmd_map(config: &ConfigArg, out: &Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let dir = out_dir(out, &cfg);
    let env = warm_environment(&cfg)?;
    let rc = cfg.reward_config();
    let report = oracle::brute_force_rank(env.cache(), rc.delta_opt_mm, rc.tol_r_mm)?;
    export::ensure_dir(&dir)?;
    export::write_config(&dir.join("config.json"), &cfg)?;
    export::write_pv_map(&dir.join("pv_map.csv"), &report)?;
    export::write_depth_map(&dir.join("depth_map.csv"), env.cache())?;
    let best = report.best();
    say!(
        "rank 1 {} : P = {:.1} W, v = {:.1} mm/min, depth = {} mm; {} states within {} mm",
        best.state,
        best.power_w,
        best.speed_mmpm,
        mm4(best.depth_mm),
        report.band().len(),
        report.tol_r_mm
    );
    say!("wrote {}", dir.display());
    Ok(())
}

fn cmd_sweep(
    config: &ConfigArg,
    param: Option<SweptParam>,
    replicates: Option<usize>,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let param = param.or(cfg.sweep.param).ok_or_else(|| {
        CliError::Validation("sweep: no parameter given (--param or sweep.param); valid names: n, epsilon, gamma, alpha, episodes".into())
    })?;
    let dir = out_dir(out, &cfg);
    let mut spec = SweepSpec::new(cfg, param);
    if cfg_values_for_other_param(&spec) {
        spec.values = param.default_values();
    }
    if let Some(r) = replicates {
        spec.replicates = r;
    }
    let outcome = experiments::run_sweep(&spec, &CachePool::new())?;
    export::write_sweep(&dir, &outcome)?;
    for p in &outcome.points {
        let passed = p.summaries.iter().filter(|s| s.verdict.passed).count();
        say!(
            "{:<16} final mean reward {:>12.4}  oracle pass {}/{}",
            param.label(p.value),
            p.mean_final_reward(),
            passed,
            p.summaries.len()
        );
    }
    say!("wrote {}", dir.display());
    Ok(())
}

/// `sweep.values` only applies when it was written for the parameter being swept.
fn cfg_values_for_other_param(spec: &SweepSpec) -> bool {
    spec.base.sweep.values.is_some() && spec.base.sweep.param != Some(spec.param)
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let job = move || match &cli.command {
        Command::Depth { power, speed, config } => cmd_depth(*power, *speed, config),
        Command::Train { config, seed, out } => cmd_train(config, *seed, out),
        Command::Map { config, out } => cmd_map(config, out),
        Command::Sweep {
            config,
            param,
            replicates,
            out,
        } => cmd_sweep(config, *param, *replicates, out),
    };
    match cli.jobs {
        Some(0) => Err(CliError::Validation("jobs: must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn main() -> ExitCode {
    run(std::env::args_os())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["ded-qopt", "depth", "--power", "1000", "--speed", "400"]).unwrap();
        assert!(matches!(cli.command, Command::Depth { power, .. } if power == 1000.0));
        let cli = Cli::try_parse_from(["ded-qopt", "--jobs", "2", "sweep", "--param", "gamma"]).unwrap();
        assert_eq!(cli.jobs, Some(2));
        assert!(matches!(cli.command, Command::Sweep { param: Some(SweptParam::Gamma), .. }));
    }

    #[test]
    fn unknown_param_lists_names() {
        let err = Cli::try_parse_from(["ded-qopt", "sweep", "--param", "lambda"]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n, epsilon, gamma, alpha, episodes"), "{msg}");
    }

    #[test]
    fn negative_power_is_validation_error() {
        let err = cmd_depth(-5.0, 500.0, &ConfigArg { config: None }).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("power"));
    }

    #[test]
    fn zero_power_gives_zero_depth() {
        cmd_depth(0.0, 500.0, &ConfigArg { config: None }).unwrap();
    }
}
