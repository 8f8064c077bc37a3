//! Command-line driver for hitlbo: reductions, brute force, single BO runs,
//! bound calculators, full searches and the HTTP expert bridge.

pub mod artifact;
pub mod commands;
pub mod experts;
pub mod instance;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hitlbo_core::bo::bounds::Exponent;
use hitlbo_core::Acquisition;

use crate::experts::ExpertMode;
use crate::instance::{Format, InstanceSpec, Problem};

/// Exit status of a search that is waiting for an expert.
pub const EXIT_SUSPENDED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "hitlbo", version, about = "Human-in-the-loop Bayesian optimization over reduced combinatorial problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Encode an instance as a univariate function and write its descriptor.
    Reduce(ReduceArgs),
    /// Exhaustively solve an instance.
    Brute(BruteArgs),
    /// One Bayesian-optimization run over the whole reduced domain.
    Bo(BoArgs),
    /// Evaluate the closed-form regret and cell bounds.
    Bounds(BoundsArgs),
    /// Branch-and-bound search with expert priors.
    Search(SearchArgs),
    /// Host the expert bridge.
    Serve(ServeArgs),
    /// Run a desk-scale verification suite.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Defaults to `cnf` for `.cnf` files and `graph` otherwise.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Defaults to max-clique for graphs and max-sat for CNF.
    #[arg(long, value_enum)]
    pub problem: Option<Problem>,
}

impl InstanceArgs {
    pub fn spec(&self) -> anyhow::Result<InstanceSpec> {
        let path = self.instance.as_ref().ok_or_else(|| anyhow::anyhow!("--instance is required"))?;
        Ok(InstanceSpec::from_path(path.to_string_lossy(), self.format, self.problem))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AcquisitionArg {
    Ucb,
    Ei,
    Prs,
}

#[derive(Debug, Clone, Args)]
pub struct AcquisitionArgs {
    #[arg(long, value_enum, default_value = "ucb")]
    pub acquisition: AcquisitionArg,
    /// UCB exploration weight.
    #[arg(long, default_value_t = 2.0)]
    pub beta: f64,
    /// EI improvement margin.
    #[arg(long, default_value_t = 0.0)]
    pub xi: f64,
}

impl AcquisitionArgs {
    pub fn acquisition(&self) -> Acquisition {
        match self.acquisition {
            AcquisitionArg::Ucb => Acquisition::Ucb { beta: self.beta },
            AcquisitionArg::Ei => Acquisition::Ei { xi: self.xi },
            AcquisitionArg::Prs => Acquisition::Prs,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Descriptor file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BruteArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Utility slack for counting near-optimal assignments.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BoArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Evaluation budget.
    #[arg(long, default_value_t = 32)]
    pub x: u64,
    #[command(flatten)]
    pub acquisition: AcquisitionArgs,
    /// Variance of the Wiener prior.
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExponentArg {
    Corrected,
    AsWritten,
}

impl From<ExponentArg> for Exponent {
    fn from(e: ExponentArg) -> Self {
        match e {
            ExponentArg::Corrected => Exponent::Corrected,
            ExponentArg::AsWritten => Exponent::AsWritten,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BoundsArgs {
    /// Evaluations of the optimiser. Accepts `2^k`.
    #[arg(long, value_parser = parse_count)]
    pub t: f64,
    /// Domain size. Accepts `2^k`.
    #[arg(long, value_parser = parse_count)]
    pub n: f64,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "corrected")]
    pub exponent: ExponentArg,
    /// Cell value for the cell upper bound; uses `--t` as the budget.
    #[arg(long)]
    pub val: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    /// Re-samples per assessed cell.
    #[arg(long, default_value_t = 4)]
    pub s: u32,
    /// Optimiser budget per re-sample.
    #[arg(long, default_value_t = 32)]
    pub x: u64,
    #[arg(long, default_value_t = 10)]
    pub max_expansions: u32,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[command(flatten)]
    pub acquisition: AcquisitionArgs,
    /// Defaults to `sim`, or to the saved mode when resuming.
    #[arg(long, value_enum)]
    pub expert: Option<ExpertMode>,
    /// Variance of the simulated prior and of the MLE fallback.
    #[arg(long, default_value_t = 1.0)]
    pub variance: f64,
    /// Address of the expert bridge in remote mode.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Seconds to wait for a remote answer before suspending.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
    /// Output directory for the run record, trace and suspended state.
    #[arg(long, default_value = "hitlbo-out")]
    pub out: PathBuf,
    /// Token printed by a suspended run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Suite name, or `all`.
    #[arg(default_value = "all")]
    pub suite: String,
    /// Write the reports as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses a count given as a number or as `2^k`.
pub fn parse_count(s: &str) -> Result<f64, String> {
    let v = match s.split_once('^') {
        Some((base, exp)) => {
            let base: f64 = base.trim().parse().map_err(|_| format!("invalid base in {s:?}"))?;
            let exp: f64 = exp.trim().parse().map_err(|_| format!("invalid exponent in {s:?}"))?;
            base.powf(exp)
        }
        None => s.trim().parse().map_err(|_| format!("invalid number {s:?}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

/// What a successful command ended with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Suspended { token: String },
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Done => 0,
            Outcome::Suspended { .. } => EXIT_SUSPENDED,
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Reduce(a) => commands::reduce(&a),
        Command::Brute(a) => commands::brute(&a),
        Command::Bo(a) => commands::bo(&a),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Search(a) => commands::search(&a),
        Command::Serve(a) => commands::serve(&a),
        Command::Bench(a) => commands::bench(&a),
    }
}
