//! `hybridpf` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hybridpf::ModelKind;

#[derive(Parser, Debug)]
#[command(
    name = "hybridpf",
    version,
    about = "Joint recurrent + SARIMAX forecasting with a particle filter"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one model on one series and write its prediction trace.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Trace path (`-` for stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        model: Option<ModelKind>,
        #[arg(long)]
        passes: Option<usize>,
    },
    /// Generate a synthetic series as CSV plus a metadata sidecar.
    Synth(SynthArgs),
    /// Compare several models on one series with a shared seed.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the table as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        passes: Option<usize>,
    },
}

#[derive(clap::Args, Debug)]
pub struct SynthArgs {
    kind: SynthKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    length: usize,
    /// Seasonal period.
    #[arg(long)]
    period: Option<usize>,
    /// Hybrid fixture noise amplitude.
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// SARIMAX shock standard deviation.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    ar: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    ma: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    seasonal_ar: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    seasonal_ma: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seasonal_d: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum SynthKind {
    Sarimax,
    Hybrid,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(hybridpf::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Core(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            CliError::Core(e) if e.is_data_error() => write!(f, "data error: {e}"),
            CliError::Core(e) => write!(f, "error: {e}"),
        }
    }
}

impl From<hybridpf::Error> for CliError {
    fn from(e: hybridpf::Error) -> Self {
        CliError::Core(e)
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("HYBRIDPF_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            CliError::Config(format!(
                "HYBRIDPF_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run {
            config,
            seed,
            out,
            model,
            passes,
        } => commands::run(
            &config,
            commands::Overrides {
                seed,
                out,
                model,
                passes,
            },
        ),
        Command::Synth(args) => commands::synth(&args),
        Command::Bench {
            config,
            seed,
            out,
            passes,
        } => commands::bench(
            &config,
            commands::Overrides {
                seed,
                out,
                model: None,
                passes,
            },
        ),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            eprintln!("hybridpf: {line}");
            ExitCode::from(e.exit_code())
        }
    }
}
