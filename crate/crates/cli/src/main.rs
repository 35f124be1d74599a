//! `lis0d`: simulate, sweep, scale, fit and rank zero-dimensional
//! lithium-sulfur discharge models from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lis0d::ModelId;

/// Exit status of a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Io = 1,
    Config = 2,
    Solver = 3,
    Ingestion = 4,
    AllFailed = 5,
}

#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(status: Status, error: impl Into<anyhow::Error>) -> Self {
        Failure { status, error: error.into() }
    }
}

/// Tags an error with the exit status it maps to.
pub trait WithStatus<T> {
    fn status(self, status: Status) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithStatus<T> for Result<T, E> {
    fn status(self, status: Status) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(status, e))
    }
}

#[derive(Parser)]
#[command(name = "lis0d", version, about = "Zero-dimensional lithium-sulfur discharge models")]
struct Cli {
    /// Worker threads for sweeps, rankings and fits [default: all cores]
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one constant-current discharge
    Simulate(SimulateArgs),
    /// One-at-a-time sweep of a single parameter
    Sweep(SweepArgs),
    /// Scale a parameter file between prototype and model scale
    Scale(ScaleArgs),
    /// Identify parameters from a measured discharge curve
    Fit(FitArgs),
    /// Rank parameters by their influence on the voltage curve
    Rank(RankArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory
    #[arg(long, env = "LIS0D_OUT", default_value = "lis0d-out")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Reaction chain: 1-4 or M1-M4
    #[arg(long)]
    pub model: ModelId,
    /// Parameter file, or `nominal`
    #[arg(long, default_value = "nominal")]
    pub params: String,
    /// Simulation config file (`key = value`)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct LoadArgs {
    /// Discharge rate against 1672 mAh/g of initial S8 [default: 0.3]
    #[arg(long, conflicts_with = "current")]
    pub c_rate: Option<f64>,
    /// Discharge current, A
    #[arg(long)]
    pub current: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    /// Swept parameter, e.g. `E0[1]`, `omega`, `m0[S8]`
    #[arg(long)]
    pub param: String,
    /// Offsets such as `rel+0.1`, `abs-0.025` or `-10%` [default: ±10 %, ±20 %; ±25, ±50 mV for E0]
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub offsets: Vec<String>,
    /// Sweep name, the first directory level under the output directory
    #[arg(long, default_value = "sweep")]
    pub name: String,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DirectionArg {
    ToModel,
    ToProto,
}

#[derive(Args, Debug)]
pub struct ScaleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Charge scale factor, model over prototype
    #[arg(long)]
    pub mu: f64,
    #[arg(long, value_enum)]
    pub direction: DirectionArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Measured discharge, CSV with `t_s,V[,I_A]`
    #[arg(long)]
    pub data: PathBuf,
    /// Prototype discharge current, A; overrides the I_A column
    #[arg(long)]
    pub current: Option<f64>,
    /// Additive correction of the current, A
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub bias: f64,
    /// Charge scale factor, model over prototype
    #[arg(long)]
    pub mu: f64,
    /// Duration weight, V^2/s^2 [default: N (10 mV)^2 / T^2]
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Search bounds file: `path = lower, upper` per line
    #[arg(long)]
    pub bounds: Option<PathBuf>,
    #[arg(long)]
    pub swarm_size: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub stall_iters: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct RankArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub load: LoadArgs,
    /// Relative perturbation applied in both directions
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(Status::Config as u8);
        }
    }
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Scale(args) => commands::scale(args),
        Command::Fit(args) => commands::fit(args),
        Command::Rank(args) => commands::rank(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.status as u8)
        }
    }
}
