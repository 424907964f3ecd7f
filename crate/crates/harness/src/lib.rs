//! Experiment runner behind the `sim` binary: gradient-engine benchmarks,
//! parameter estimation, DH arm design and adaptive MPC, each driven by a
//! JSON config with a mandatory seed and writing CSV tables plus
//! `summary.json` into an output directory.

pub mod commands;
pub mod config;
mod error;
pub mod table;

use std::path::Path;

pub use commands::{cmd_benchmark, cmd_design, cmd_estimate, cmd_mpc, cmd_simulate};
pub use error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Benchmark,
    Simulate,
    Estimate,
    Design,
    Mpc,
}

/// Load the config for `cmd` and run it.
pub fn run(cmd: Command, config_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    match cmd {
        Command::Benchmark => cmd_benchmark(&config::load(config_path, seed)?, out).map(drop),
        Command::Simulate => cmd_simulate(&config::load(config_path, seed)?, config_path, out).map(drop),
        Command::Estimate => cmd_estimate(&config::load(config_path, seed)?, config_path, out).map(drop),
        Command::Design => cmd_design(&config::load(config_path, seed)?, out).map(drop),
        Command::Mpc => cmd_mpc(&config::load(config_path, seed)?, out).map(drop),
    }
}
