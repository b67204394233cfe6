use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use robust_cbf_cli::commands::{self, GlobalFlags};

/// Minimum-norm safe control under ball-bounded parametric uncertainty.
#[derive(Parser)]
#[command(name = "robust-cbf", version, about)]
struct Cli {
    /// Scenario configuration file (key = value lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path for trajectory CSV (default trajectory.csv).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the scenario PRNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Also emit an SVG line chart of h(t) and eta(t).
    #[arg(long, global = true)]
    svg: bool,

    /// Validate the configuration and exit without running or writing.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Relax infeasible solves by the smallest bound lift (always logged).
    #[arg(long, global = true)]
    slack_mode: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the robust safe-control SDP at the configured state snapshot.
    Solve,
    /// Run the closed-loop simulation and write the trajectory CSV.
    Simulate,
    /// Cross-check the SDP against the independent oracles on random
    /// instances.
    Verify {
        /// Number of feasible random instances to process.
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Parameter dimension of the generated instances.
        #[arg(long, default_value_t = 3)]
        p: usize,
        /// Control dimension of the generated instances.
        #[arg(long, default_value_t = 2)]
        m: usize,
    },
    /// Validate analytic model derivatives by finite differences.
    CheckDerivs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let flags = GlobalFlags {
        out: cli.out,
        seed: cli.seed,
        svg: cli.svg,
        dry_run: cli.dry_run,
        slack_mode: cli.slack_mode,
    };
    let need_config = || {
        cli.config.clone().ok_or_else(|| {
            eprintln!("error: --config <path> is required for this subcommand");
        })
    };
    let code = match cli.command {
        Command::Solve => match need_config() {
            Ok(path) => commands::cmd_solve(&path, &flags),
            Err(()) => 1,
        },
        Command::Simulate => match need_config() {
            Ok(path) => commands::cmd_simulate(&path, &flags),
            Err(()) => 1,
        },
        Command::Verify { instances, p, m } => {
            commands::cmd_verify(instances, flags.seed.unwrap_or(7), p, m)
        }
        Command::CheckDerivs => match need_config() {
            Ok(path) => commands::cmd_check_derivs(&path, &flags),
            Err(()) => 1,
        },
    };
    ExitCode::from(code as u8)
}
