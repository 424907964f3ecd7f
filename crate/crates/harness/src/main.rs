use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use diffsim_harness::{run, Command};

#[derive(Parser)]
#[command(name = "sim", version, about = "Differentiable-physics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Io {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time the four gradient engines on n-link pendulums.
    Benchmark(Io),
    /// Integrate a model document into a reference CSV.
    Simulate(Io),
    /// Fit model parameters to a reference trajectory.
    Estimate(Io),
    /// Recover DH parameters from an end-effector path.
    Design(Io),
    /// Adaptive MPC swing-up against a hidden-parameter cart-pole.
    Mpc(Io),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (cmd, io) = match cli.command {
        Cmd::Benchmark(io) => (Command::Benchmark, io),
        Cmd::Simulate(io) => (Command::Simulate, io),
        Cmd::Estimate(io) => (Command::Estimate, io),
        Cmd::Design(io) => (Command::Design, io),
        Cmd::Mpc(io) => (Command::Mpc, io),
    };
    match run(cmd, &io.config, &io.out, io.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
