//! Command-line front end: steering sweeps, capability estimates, mission
//! planning, closed-loop simulation and the DP comparison.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "bikebot", version, about = "Balance-prioritized pose planning and control for a bikebot manipulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turning radius and torque sensitivity over the initial steering angle,
    /// plus the balance torque surface at 90 deg.
    SteerSweep(Common),
    /// Maximum recoverable roll for each balancing strategy.
    Capability(Common),
    /// Inverse kinematics and segment plans for a pose sequence.
    Plan(Common),
    /// Closed-loop simulation of a plan or of stationary balance.
    Simulate(Common),
    /// Bézier planner against the dynamic-programming reference.
    CompareDp(Common),
}

#[derive(Args, Clone)]
pub struct Common {
    /// Scenario file (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for batch runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Quantize the roll measurement at 0.1 deg unless the file sets a resolution.
    #[arg(long)]
    quantized_imu: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::SteerSweep(c) => commands::run(c, commands::steer_sweep),
        Command::Capability(c) => commands::run(c, commands::capability),
        Command::Plan(c) => commands::run(c, commands::plan),
        Command::Simulate(c) => commands::run(c, commands::simulate),
        Command::CompareDp(c) => commands::run(c, commands::compare_dp),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
