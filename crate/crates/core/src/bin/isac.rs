//! `isac`: secure ISAC beamforming with antenna allocation.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | usage error (bad flags, unreadable or invalid scenario) |
//! | 3 | infeasible (no λ candidate or support admits a solution) |
//! | 4 | numerical failure in the conic solver or reconstruction |
//! | 5 | output I/O error |

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac_core::experiments::{self, ExperimentSpec, Mode, EXIT_USAGE};
use isac_core::scenario::LambdaGridSpec;

#[derive(Parser)]
#[command(name = "isac", version, about = "Secure ISAC transmit design with antenna allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario; writes report.json, beampattern.csv, trace.jsonl.
    Solve(Common),
    /// Sweep the secrecy floor R_0 (bits/s/Hz); writes sweep.csv, trace.jsonl.
    SweepSecrecy(Common),
    /// Sweep total power (dBm), optimized allocation against baselines.
    SweepPower(Common),
    /// Optimized allocation against contiguous and full-array baselines.
    CompareAa(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario TOML file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of RF links; overrides the scenario. Required for sweeps.
    #[arg(long)]
    g: Option<usize>,
    /// Worker threads for sweep points and λ candidates.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Seed for the Monte-Carlo power check.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// λ grid as `min,max,count` (log-spaced).
    #[arg(long, value_parser = parse_lambda_grid)]
    lambda_grid: Option<LambdaGridSpec>,
    /// Sweep values, comma separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
    /// Total power in dBm; overrides the scenario.
    #[arg(long, allow_negative_numbers = true)]
    power_dbm: Option<f64>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn parse_lambda_grid(s: &str) -> Result<LambdaGridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [min, max, count] = parts[..] else {
        return Err(format!("expected min,max,count, got {s:?}"));
    };
    let grid = LambdaGridSpec {
        min: min.parse().map_err(|e| format!("min: {e}"))?,
        max: max.parse().map_err(|e| format!("max: {e}"))?,
        points: count.parse().map_err(|e| format!("count: {e}"))?,
    };
    grid.validate().map_err(|e| e.to_string())?;
    Ok(grid)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (mode, c) = match cli.command {
        Command::Solve(c) => (Mode::Solve, c),
        Command::SweepSecrecy(c) => (Mode::SweepSecrecy, c),
        Command::SweepPower(c) => (Mode::SweepPower, c),
        Command::CompareAa(c) => (Mode::CompareAllocation, c),
    };
    let spec = ExperimentSpec {
        mode,
        scenario: c.scenario,
        out_dir: c.out,
        sweep_values: c.values,
        seed: c.seed,
        rf_links: c.g,
        workers: c.workers,
        lambda_grid: c.lambda_grid,
        total_power_dbm: c.power_dbm,
    };
    match experiments::run(&spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
