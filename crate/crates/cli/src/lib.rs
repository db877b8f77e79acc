//! Problem files, JSON reports and CSV trajectories for `ddae-kit`.

pub mod problem;
pub mod report;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ddae_core::DdaeError;
use thiserror::Error;

pub use problem::{FieldTag, HistoryFragment, PieceFile, ProblemFile, Scalar};

pub const SCHEMA: &str = "ddae-kit/1";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error("matrix pencil (E, A) is singular")]
    Irregular,

    #[error("{0}")]
    Decomposition(String),

    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Irregular | Self::Decomposition(_) => 3,
            Self::Input(_) | Self::Io(_) => 4,
        }
    }
}

impl From<DdaeError> for CliError {
    fn from(e: DdaeError) -> Self {
        match e {
            DdaeError::SingularPencil => Self::Irregular,
            DdaeError::DecompositionFailure { .. } => Self::Decomposition(e.to_string()),
            other => Self::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ddae-kit", version, about = "Analyse and solve linear delay differential-algebraic equations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InconsistentMode {
    /// Stop at the first inconsistent restart.
    Stop,
    /// Record the failed knot in the ledger, then stop.
    Record,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeSide {
    Slow,
    Fast,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Decomposition, classification and history checks as a JSON report.
    Analyze {
        problem: PathBuf,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Method of steps: trajectory CSV and jump-ledger JSON.
    Solve {
        problem: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        ledger: PathBuf,
        /// Collocation degree per sub-interval.
        #[arg(long, default_value_t = 48)]
        degree: usize,
        /// Highest derivative order compared at knots (default: index + 2).
        #[arg(long)]
        kmax: Option<usize>,
        #[arg(long, value_enum, default_value_t = InconsistentMode::Record)]
        on_inconsistent: InconsistentMode,
    },
    /// Characteristic roots and the exponential-stability verdict.
    Stability {
        problem: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        re_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        re_max: Option<f64>,
        #[arg(long)]
        im_max: Option<f64>,
        /// Grid cells per axis.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retarded multi-delay equation for the slow part of a smoothing system.
    HiddenDelays {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Admissibility and splicing conditions of the history.
    CheckHistory {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Admissible history whose m-th derivative jumps by the target at t = 0.
    Probe {
        problem: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, value_enum)]
        side: ProbeSide,
        /// JSON array, e.g. `[1, 0.5]` (complex: `[[1, 0], [0, 1]]`).
        #[arg(long)]
        target: String,
        /// Seed for the free derivative values; zero when omitted.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports always serialise");
    s.push('\n');
    s
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let path = match &cli.command {
        Command::Analyze { problem, .. }
        | Command::Solve { problem, .. }
        | Command::Stability { problem, .. }
        | Command::HiddenDelays { problem, .. }
        | Command::CheckHistory { problem, .. }
        | Command::Probe { problem, .. } => problem.clone(),
    };
    let file = ProblemFile::read(&path)?;
    match file.field {
        FieldTag::Real => dispatch::<f64>(&file, &cli.command),
        FieldTag::Complex => dispatch::<num_complex::Complex64>(&file, &cli.command),
    }
}

fn dispatch<T: ddae_core::Field>(file: &ProblemFile, command: &Command) -> Result<i32, CliError> {
    let sys = file.to_system::<T>()?;
    match command {
        Command::Analyze { out, .. } => {
            let v = report::analyze(&sys)?;
            write_output(out.as_deref(), &json_text(&v))?;
            Ok(0)
        }
        Command::Solve { out, ledger, degree, kmax, on_inconsistent, .. } => {
            let result = report::solve(&sys, *degree, *kmax, *on_inconsistent)?;
            std::fs::write(out, &result.csv)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", out.display())))?;
            write_output(Some(ledger), &json_text(&result.ledger))?;
            Ok(if result.inconsistent { 2 } else { 0 })
        }
        Command::Stability { re_min, re_max, im_max, grid, out, .. } => {
            let v = report::stability(&sys, *re_min, *re_max, *im_max, *grid)?;
            write_output(out.as_deref(), &json_text(&v))?;
            Ok(0)
        }
        Command::HiddenDelays { out, .. } => {
            let v = report::hidden_delays(&sys)?;
            write_output(out.as_deref(), &json_text(&v))?;
            Ok(0)
        }
        Command::CheckHistory { out, .. } => {
            let v = report::check_history(&sys)?;
            write_output(out.as_deref(), &json_text(&v))?;
            Ok(0)
        }
        Command::Probe { order, side, target, seed, out, .. } => {
            let fragment = report::probe(&sys, *order, *side, target, *seed)?;
            let mut text = serde_json::to_string_pretty(&fragment).expect("fragments always serialise");
            text.push('\n');
            write_output(out.as_deref(), &text)?;
            Ok(0)
        }
    }
}
