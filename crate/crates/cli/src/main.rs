//! `heatengine`: synthesize optimal protocols for a stochastic heat engine
//! with a periodically driven bath, and check them against the covariance
//! equations and a Langevin ensemble.
//!
//! Exit status: 0 on success, 2 for configuration and input errors, 3 for
//! numerical failures and failed validation checks.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatengine::{Error, Execution};

use config::{Format, Overrides, RunConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Io(msg) => write!(f, "i/o error: {msg}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidProfile(_) | Error::InvalidParams(_) | Error::InvalidConfig(_) | Error::PowerOutOfRange { .. } => {
                CliError::Config(e.to_string())
            }
            other => CliError::Numeric(other),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

const DEFAULTS: &str = "\
Configuration file (JSON, unknown keys rejected; flags override it):
  profiles     [{name, spec}], spec inline or a file path relative to the config
  params       m = 1, gamma = 1, k_b = 1, t_f = profile period,
               q0 or friction_ratio = gamma/sqrt(m q0) (default ratio 0.01)
  synthesize   power = maximum, points = 1000
  tradeoff     grid = 50, fraction = 1 - 1e-9
  sweep        axis = friction | temperature_ratio, values = [1e-3 .. 1],
               protocols = [low_friction_optimal], mean = 1,
               options = {orbit, jump_ramp, periodic_tol = 1e-7}
  montecarlo   ensemble = {n_particles = 10000, dt = 1e-4, n_cycles_discard = 0,
               n_cycles_measure = 1, seed = 0, n_nodes = 100,
               scheme = semi_implicit, noise_substeps = 1},
               power = maximum, jump_ramp = none, start = orbit | equilibrium
  out = out (relative to the config file), format = csv

Exit status: 0 success, 2 configuration error, 3 numerical failure or failed check.";

#[derive(Parser)]
#[command(
    name = "heatengine",
    version,
    about = "Optimal protocols for a stochastic heat engine with a periodic bath",
    after_help = DEFAULTS
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Temperature profile, inline JSON or a file. Repeat for batches.
    #[arg(long = "profile")]
    profiles: Vec<String>,
    /// Engine parameters, inline JSON or a file.
    #[arg(long)]
    params: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-power or fixed-power protocol on a time grid.
    Synthesize {
        #[command(flatten)]
        common: Common,
        /// Target power; omit for maximum power.
        #[arg(long)]
        power: Option<f64>,
        /// Rows of the protocol table.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Maximum efficiency as a function of power, for every profile.
    Tradeoff {
        #[command(flatten)]
        common: Common,
        /// Number of power levels.
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Full-model steady states across friction or temperature ratio.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Langevin ensemble compared with the covariance equations.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        /// Drive the fixed-power protocol at this power.
        #[arg(long)]
        power: Option<f64>,
        /// Ensemble seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Runs the acceptance checks.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Check number (1-10); repeat to select several. Default: all.
        #[arg(long = "check")]
        checks: Vec<u8>,
        /// Particles in the Monte Carlo check.
        #[arg(long)]
        particles: Option<usize>,
    },
}

fn execution(jobs: Option<usize>) -> Result<Execution, CliError> {
    match jobs {
        Some(0) => Err(CliError::Config("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Execution::Parallel)
        }
        _ => Ok(Execution::Parallel),
    }
}

fn load(common: &Common, flags: Overrides) -> Result<(RunConfig, Execution), CliError> {
    let flags = Overrides {
        profiles: common.profiles.clone(),
        params: common.params.clone(),
        out: common.out.clone(),
        format: common.format,
        ..flags
    };
    let cfg = RunConfig::load(common.config.as_deref(), &flags)?;
    Ok((cfg, execution(common.jobs)?))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Synthesize { common, power, grid } => {
            let (cfg, _) = load(&common, Overrides { power, grid, ..Default::default() })?;
            commands::synthesize(&cfg)?;
        }
        Command::Tradeoff { common, grid } => {
            let (cfg, exec) = load(&common, Overrides { grid, ..Default::default() })?;
            commands::tradeoff(&cfg, exec)?;
        }
        Command::Sweep { common } => {
            let (cfg, exec) = load(&common, Overrides::default())?;
            commands::sweep(&cfg, exec)?;
        }
        Command::Montecarlo { common, power, seed } => {
            let (cfg, exec) = load(&common, Overrides { power, seed, ..Default::default() })?;
            commands::montecarlo(&cfg, exec)?;
        }
        Command::Validate { common, checks, particles } => {
            let (cfg, exec) = load(&common, Overrides::default())?;
            if !commands::validate(&cfg, exec, &checks, particles)? {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("heatengine: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
