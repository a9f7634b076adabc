//! `eprsim` binary: dispersion budgets, Monte Carlo simulation, counting
//! rates and parameter sweeps for a pulsed cold-atom time-of-flight
//! apparatus.

use clap::{Args, Parser, Subcommand, ValueEnum};
use eprsim::cli_io::{
    command_budget, command_rate, command_report, command_simulate, command_sweep,
    load_sweep_spec, parse_config, DEFAULT_SEED,
};
use eprsim::rate_budget::VelocityVolumeMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "eprsim", version, about = "Uncertainty budget and event simulator for a cold-atom recoil time-of-flight experiment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat TOML config layered over the built-in defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Emit machine-readable JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Directory for output files plus a run manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RateMode {
    /// Quoted velocity-space volume.
    Paper,
    /// Velocity-space volume recomputed from the trap temperature.
    Derived,
}

impl From<RateMode> for VelocityVolumeMode {
    fn from(mode: RateMode) -> Self {
        match mode {
            RateMode::Paper => VelocityVolumeMode::Paper,
            RateMode::Derived => VelocityVolumeMode::Derived,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form dispersion budget.
    Budget {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Per-event Monte Carlo of the measurement chain.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Accepted events to collect.
        #[arg(long, default_value_t = 100_000)]
        events: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Give up after this many raw samples.
        #[arg(long, default_value_t = eprsim::monte_carlo::MAX_SAMPLES)]
        max_samples: u64,
    },
    /// Counting-rate ledger.
    Rate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = RateMode::Paper)]
        mode: RateMode,
    },
    /// Grid sweep from a sweep description file.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// TOML sweep description ([[parameter]] entries plus objective).
        #[arg(long, value_name = "PATH")]
        sweep: PathBuf,
    },
    /// Consolidated budget + Monte Carlo + rate report.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// Accepted events for the Monte Carlo column; 0 skips it.
        #[arg(long, default_value_t = 100_000)]
        events: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let mut stderr = std::io::stderr();
    let result = (|| {
        match cli.command {
            Command::Budget { common } => {
                let parsed = parse_config(common.config.as_deref())?;
                command_budget(&parsed, common.json, common.out.as_deref(), &mut stdout, &mut stderr)
            }
            Command::Simulate { common, events, seed, max_samples } => {
                let parsed = parse_config(common.config.as_deref())?;
                command_simulate(
                    &parsed, events, seed, max_samples, common.json, common.out.as_deref(),
                    &mut stdout, &mut stderr,
                )
            }
            Command::Rate { common, mode } => {
                let parsed = parse_config(common.config.as_deref())?;
                command_rate(
                    &parsed, mode.into(), common.json, common.out.as_deref(),
                    &mut stdout, &mut stderr,
                )
            }
            Command::Sweep { common, sweep } => {
                let parsed = parse_config(common.config.as_deref())?;
                let spec = load_sweep_spec(&sweep, DEFAULT_SEED)?;
                command_sweep(
                    &parsed, &spec, common.json, common.out.as_deref(),
                    &mut stdout, &mut stderr,
                )
            }
            Command::Report { common, events, seed } => {
                let parsed = parse_config(common.config.as_deref())?;
                command_report(
                    &parsed, events, seed, common.out.as_deref(), &mut stdout, &mut stderr,
                )
            }
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
