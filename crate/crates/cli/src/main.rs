mod commands;
mod dataset;
mod error;
mod model;

use clap::{Parser, Subcommand};
use commands::{fit, moran, predict, simulate, weights};
use error::CliError;

/// Constrained spatial autoregressive models for interval-valued data.
#[derive(Debug, Parser)]
#[command(name = "interval-sar", version)]
struct Cli {
    /// Worker threads; defaults to the number of available cores
    #[arg(long, visible_alias = "threads", global = true)]
    jobs: Option<usize>,
    /// Log level for stderr (off, error, warn, info, debug, trace)
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a spatial weight matrix
    Weights(weights::WeightsArgs),
    /// Moran's I with a permutation p-value
    Moran(moran::MoranArgs),
    /// Fit ICSM, ICM or ISM
    Fit(fit::FitArgs),
    /// Predict test intervals from a model file
    Predict(predict::PredictArgs),
    /// Run simulation scenarios
    Simulate(simulate::SimulateArgs),
    /// Print the version
    Version,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::input("InvalidArgument", "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::input("ThreadPool", e))?;
    }
    match cli.command {
        Command::Weights(a) => weights::run(a),
        Command::Moran(a) => moran::run(a),
        Command::Fit(a) => fit::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Version => {
            println!("interval-sar {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .parse_env("INTERVAL_SAR_LOG")
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
