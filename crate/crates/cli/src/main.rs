//! `qburgers` command-line driver.
//!
//! Exit status: 0 on success, 1 on validation or I/O errors, 2 when a solver
//! fails numerically.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Validation(_) => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl From<qburgers::Error> for CliError {
    fn from(e: qburgers::Error) -> Self {
        use qburgers::Error as E;
        match e {
            E::BlowUp { .. } | E::TtBlowUp { .. } | E::Diverged { .. } => {
                Self::Numerical(e.to_string())
            }
            _ => Self::Validation(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "qburgers",
    version,
    about = "Burgers solvers: finite differences, tensor trains, variational circuits and physics-informed networks"
)]
pub struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Global seed, split per module.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for `sweep-chi` (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// `section.key=value`, applied after the config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explicit finite-difference solve.
    FdmSolve,
    /// Tensor-train solve at a fixed bond cap.
    TtSolve,
    /// Variational time marching on a state-vector simulator.
    VqaSolve,
    /// Train a physics-informed network.
    QpinnTrain,
    /// Tensor-train solves over a list of bond caps against the FDM reference.
    SweepChi,
    /// MSE and relative L2 error between two solution CSVs.
    Compare { a: PathBuf, b: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::FdmSolve => "fdm-solve",
            Self::TtSolve => "tt-solve",
            Self::VqaSolve => "vqa-solve",
            Self::QpinnTrain => "qpinn-train",
            Self::SweepChi => "sweep-chi",
            Self::Compare { .. } => "compare",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
