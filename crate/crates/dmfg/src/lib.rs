//! Command-line driver for `dmfg-core`: configuration files, CSV reports and
//! exit-code semantics.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod csv;

pub mod exit {
    pub const OK: i32 = 0;
    /// A `check` or `verify` criterion did not hold.
    pub const CHECK_FAILED: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const ROOT_SELECTION: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
    pub const NOT_CONVERGED: i32 = 5;
    pub const IO: i32 = 6;
}

#[derive(Debug, Parser)]
#[command(name = "dmfg", version, about = "Discounted linear-quadratic mean field game solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (`section.key = value` lines).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `sim.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural and sampled monotonicity checks.
    Check(Common),
    /// Solve the root system and select the admissible value.
    Solve(Common),
    /// Simulate the equilibrium population and a representative cost.
    Simulate(Common),
    /// Run verification checks.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Comma list from nash, gateaux, consistency, representation,
        /// uniqueness, lipschitz (default: all).
        #[arg(long)]
        checks: Option<String>,
    },
    /// Damped fixed-point iteration on the mean flow.
    FixedPoint(Common),
}

/// Runs the CLI on `args` (including the program name), printing to stdout
/// and stderr, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let mut out = String::new();
    let result = dispatch(&cli.command, &mut out);
    print!("{out}");
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: &Command, out: &mut String) -> commands::Outcome {
    let (common, checks) = match command {
        Command::Verify { common, checks } => (common, Some(commands::parse_checks(checks.as_deref())?)),
        Command::Check(c) | Command::Solve(c) | Command::Simulate(c) | Command::FixedPoint(c) => (c, None),
    };
    let mut cfg = config::load(&common.config).map_err(|e| commands::Failure {
        code: exit::USAGE,
        message: e.to_string(),
    })?;
    if let Some(seed) = common.seed {
        cfg.sim.seed = seed;
    }
    let dir = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    match command {
        Command::Check(_) => commands::check(&cfg, out),
        Command::Solve(_) => commands::solve(&cfg, &dir, out),
        Command::Simulate(_) => commands::simulate(&cfg, &dir, out),
        Command::Verify { .. } => commands::verify(&cfg, &dir, checks.as_deref().unwrap_or(&[]), out),
        Command::FixedPoint(_) => commands::fixed_point(&cfg, &dir, out),
    }
}
