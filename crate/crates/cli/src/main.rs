//! Command-line front end for the market-making solvers.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for numerical
//! failures. Errors are reported as a single `error[<kind>]: <reason>` line.

mod commands;
mod config;
mod plot;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl From<flowmm::Error> for CliError {
    fn from(e: flowmm::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Numeric(m) => ("numeric", m),
        };
        format!("error[{kind}]: {}", msg.split_whitespace().collect::<Vec<_>>().join(" "))
    }
}

type Runner = fn(&Path, Option<u64>) -> Result<Vec<Artifact>, CliError>;

/// A file produced by a command, written only once every output is ready.
pub struct Artifact {
    pub name: &'static str,
    pub contents: String,
}

#[derive(Parser)]
#[command(name = "flowmm", version, about = "Macroscopic market-making solvers and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the `seed` key of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Deterministic coefficients and affine trajectory for a linear intensity.
    Riccati(Common),
    /// HJB coefficients driven by an Ornstein-Uhlenbeck factor.
    SolveHjb(Common),
    /// Decoupling field and optimal trajectory for a general intensity.
    SolveFbsde(Common),
    /// Lattice model versus the macroscopic limit.
    AsCompare(Common),
    /// Terminal ask quote against order imbalance.
    ImpactSweep(Common),
    /// Liquidation schedules evaluated against the market maker.
    ExecEval(Common),
}

fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<(), CliError> {
    let io = |e: std::io::Error, p: &Path| CliError::Config(format!("cannot write {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let staged: Vec<(PathBuf, PathBuf)> =
        artifacts.iter().map(|a| (dir.join(format!(".{}.tmp", a.name)), dir.join(a.name))).collect();
    let cleanup = || {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for (a, (tmp, _)) in artifacts.iter().zip(&staged) {
        if let Err(e) = fs::write(tmp, &a.contents) {
            cleanup();
            return Err(io(e, tmp));
        }
    }
    for (tmp, dest) in &staged {
        if let Err(e) = fs::rename(tmp, dest) {
            cleanup();
            return Err(io(e, dest));
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, runner): (&Common, Runner) = match &cli.command {
        Command::Riccati(c) => (c, commands::riccati),
        Command::SolveHjb(c) => (c, commands::solve_hjb),
        Command::SolveFbsde(c) => (c, commands::solve_fbsde),
        Command::AsCompare(c) => (c, commands::as_compare),
        Command::ImpactSweep(c) => (c, commands::impact_sweep),
        Command::ExecEval(c) => (c, commands::exec_eval),
    };
    let artifacts = runner(&common.config, common.seed)?;
    write_all(&common.out, &artifacts)?;
    for a in &artifacts {
        println!("wrote {}", common.out.join(a.name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let reason = e.kind().to_string();
            eprintln!("{}", CliError::Config(format!("bad arguments: {reason}")).line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.code())
        }
    }
}
