//! `surrogate-forge`: fit the reference model, build surrogate datasets,
//! train surrogates and run the benchmark suites.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use surrogate_forge::Error;

#[derive(Debug, Parser)]
#[command(name = "surrogate-forge", version, about = "Bayesian reference models and their neural surrogates")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON run configuration (defaults apply when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Artifact directory; overrides the config and the workdir variable.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Produce missing upstream artifacts instead of failing.
    #[arg(long, global = true)]
    pub auto: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample ground truth and observations, then the reference posterior.
    FitBm,
    /// Generate a masked surrogate training set from the posterior.
    GenData,
    /// Train the surrogate on one generated set, or actively with --al.
    Train {
        #[arg(long)]
        al: bool,
    },
    /// Predict a CSV of inputs with the reference model or the surrogate.
    Predict {
        #[arg(long, value_enum, default_value_t = Engine::Bm)]
        engine: Engine,
        /// Input CSV with a header row and J columns.
        #[arg(long)]
        input: PathBuf,
        /// Average over draws (reference) or outputs (surrogate).
        #[arg(long)]
        mean: bool,
        /// Output file (default: <out>/predictions.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run one benchmark suite.
    Bench {
        #[command(subcommand)]
        suite: Suite,
    },
    /// Effect curves of the reference model and of surrogates per τ.
    Invariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Bm,
    Nn,
}

#[derive(Debug, Subcommand)]
enum Suite {
    /// Prediction time against J for both engines.
    Speed,
    /// Surrogate uncertainty against its error.
    Calibration,
    /// Same as the `invariance` command.
    Invariance,
    /// Smallest dataset for which the surrogate pays off.
    Crossover {
        #[arg(long)]
        kappa: Option<u64>,
        #[arg(long)]
        m: Option<u64>,
    },
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub const CONFIG: u8 = 2;
    pub const SAMPLER: u8 = 3;
    pub const TRAINING: u8 = 4;
    pub const MISSING: u8 = 5;

    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: Self::CONFIG,
            message: message.into(),
        }
    }

    pub fn missing(message: impl Into<String>) -> Self {
        CliError {
            code: Self::MISSING,
            message: message.into(),
        }
    }

    pub fn from_core(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Json(_) => Self::CONFIG,
            Error::SamplerInit(_) => Self::SAMPLER,
            Error::NanLoss { .. } => Self::TRAINING,
            Error::Artifact { .. } => Self::MISSING,
            _ => 1,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::from_core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = commands::Context::new(&cli.global)?;
    match cli.command {
        Command::FitBm => commands::fit_bm(&ctx),
        Command::GenData => commands::gen_data(&ctx),
        Command::Train { al } => commands::train(&ctx, al),
        Command::Predict {
            engine,
            input,
            mean,
            output,
        } => commands::predict(&ctx, engine, &input, mean, output),
        Command::Bench { suite } => match suite {
            Suite::Speed => commands::bench_speed(&ctx),
            Suite::Calibration => commands::bench_calibration(&ctx),
            Suite::Invariance => commands::invariance(&ctx),
            Suite::Crossover { kappa, m } => commands::bench_crossover(&ctx, kappa, m),
        },
        Command::Invariance => commands::invariance(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
