//! `swing`: solve, price and validate swing put options from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ParamFlags, RunConfig, SweepParam};

/// Exit code for unusable configuration or arguments.
const EXIT_USAGE: u8 = 2;
/// Exit code for a solver or oracle failure.
const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "swing", version, about = "Exercise boundaries and prices of swing put options")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "SWING_OUT_DIR")]
    out: Option<PathBuf>,
    /// Discretisation of the command: solver grid steps (solve, price,
    /// sweep), lattice steps (oracle) or monitoring steps per year (mc).
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Levels to report (price, oracle); rights to simulate (mc).
    #[arg(long, global = true, value_delimiter = ',')]
    level: Vec<usize>,
    #[command(flatten)]
    params: ParamFlags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve every level and write the solution JSON and boundary CSVs.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Tabulate values and region labels over a probe mesh.
    Price {
        #[command(flatten)]
        common: Common,
        /// Previously written solution JSON; solves inline when absent.
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Probe times (comma separated).
        #[arg(long, value_delimiter = ',')]
        t: Vec<f64>,
        /// Probe prices (comma separated).
        #[arg(long, value_delimiter = ',')]
        x: Vec<f64>,
    },
    /// Compare the solution with the binomial refraction lattice.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Monte Carlo value of the solved exercise policy.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve for each value of one parameter and write plot-ready curves.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        param: Option<SweepParam>,
        /// Sweep values (comma separated).
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

/// Failure classes mapped to exit codes.
pub enum Failure {
    Usage(anyhow::Error),
    Solver(anyhow::Error),
    Other(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Other(e.into())
    }
}

fn prepare(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = RunConfig::load(common.config.as_deref()).map_err(Failure::Usage)?;
    cfg.apply_params(&common.params);
    let out = common
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    cfg.out = Some(out.clone());
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { common } => {
            let (mut cfg, out) = prepare(&common)?;
            if let Some(s) = common.steps {
                cfg.solver.grid_steps = s;
            }
            cfg.validate().map_err(Failure::Usage)?;
            commands::run_solve(&cfg, &out)
        }
        Command::Price { common, solution, t, x } => {
            let (mut cfg, out) = prepare(&common)?;
            if let Some(s) = common.steps {
                cfg.solver.grid_steps = s;
            }
            if !t.is_empty() {
                cfg.price.times = t;
            }
            if !x.is_empty() {
                cfg.price.prices = x;
            }
            if !common.level.is_empty() {
                cfg.price.levels = common.level.clone();
            }
            cfg.validate().map_err(Failure::Usage)?;
            commands::price(&cfg, solution.as_deref(), &out)
        }
        Command::Oracle { common, solution } => {
            let (mut cfg, out) = prepare(&common)?;
            if let Some(s) = common.steps {
                cfg.oracle.steps = s;
            }
            cfg.validate().map_err(Failure::Usage)?;
            commands::oracle(&cfg, solution.as_deref(), &common.level, &out)
        }
        Command::Mc {
            common,
            solution,
            paths,
            seed,
        } => {
            let (mut cfg, out) = prepare(&common)?;
            if let Some(s) = common.steps {
                cfg.mc.steps_per_year = s;
            }
            if let Some(p) = paths {
                cfg.mc.paths = p;
            }
            if let Some(s) = seed {
                cfg.mc.seed = s;
            }
            cfg.validate().map_err(Failure::Usage)?;
            let rights = match common.level.as_slice() {
                [] => None,
                [k] => Some(*k),
                _ => return Err(Failure::Usage(anyhow::anyhow!("mc takes a single --level"))),
            };
            commands::mc(&cfg, solution.as_deref(), rights, &out)
        }
        Command::Sweep {
            common,
            param,
            values,
        } => {
            let (mut cfg, out) = prepare(&common)?;
            if let Some(s) = common.steps {
                cfg.solver.grid_steps = s;
            }
            if let Some(param) = param {
                cfg.sweep = Some(config::SweepOptions { param, values });
            } else if !values.is_empty() {
                return Err(Failure::Usage(anyhow::anyhow!("--values needs --param")));
            }
            if cfg.sweep.is_none() {
                return Err(Failure::Usage(anyhow::anyhow!(
                    "sweep needs --param and --values or a `sweep` section in the config"
                )));
            }
            cfg.validate().map_err(Failure::Usage)?;
            commands::sweep(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver error: {e:#}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
