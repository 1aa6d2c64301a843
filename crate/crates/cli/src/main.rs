//! `anonsat`: build gateway meshes from coordinate datasets, compute
//! anonymity metrics, and run the seeded routing simulations.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "anonsat", version, about = "Gateway-mesh anonymity toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the dataset-consuming commands. Any flag given here
/// overrides the same key from `--config`.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Key-value config file (`section.key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Link profile name: lora-subghz, dash7, lora24-ltem1, ltem2, or a custom name with --range/--rate.
    #[arg(long)]
    profile: Option<String>,
    /// Custom profile range in meters.
    #[arg(long)]
    range: Option<f64>,
    /// Custom profile peak rate in bit/s.
    #[arg(long)]
    rate: Option<f64>,
    /// Output file (directory for `simulate`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic `lat,lon` dataset.
    Generate {
        /// uniform, clustered or complete.
        kind: String,
        /// Number of points.
        n: usize,
        /// Side of the square region in meters.
        #[arg(long, default_value_t = 10_000.0)]
        extent: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Drop close points and keep the largest connected component.
    Preprocess {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Minimum separation between kept points, meters.
        #[arg(long)]
        min_sep: Option<f64>,
    },
    /// Anonymity metrics for a dataset.
    Metrics {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_hops: Option<usize>,
        /// Include one row per output gateway.
        #[arg(long)]
        per_gateway: bool,
        /// Output format.
        #[arg(long, value_parser = ["json", "csv"], default_value = "json")]
        format: String,
        /// Upper bound on paths explored by a single search.
        #[arg(long)]
        path_cap: Option<u64>,
    },
    /// Run the seeded TLS/upload simulation campaign.
    Simulate {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_hops: Option<usize>,
        /// Base seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Client counts to sweep, e.g. 1,10,50.
        #[arg(long, value_delimiter = ',')]
        clients: Option<Vec<usize>>,
        #[arg(long)]
        runs: Option<usize>,
        /// Simulated seconds per run.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Distance from origin to chosen output as max_hops grows.
    Distance {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// max_hops values to sample, e.g. 0,1,2,3.
        #[arg(long, value_delimiter = ',')]
        max_hops: Option<Vec<usize>>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Disable the per-client direction bias.
        #[arg(long)]
        no_bias: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Warn).format_target(false).format_timestamp(None).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { kind, n, extent, seed, out } => commands::generate(&kind, n, extent, seed, out.as_deref()),
        Command::Preprocess { input, common, min_sep } => commands::preprocess(&input, &common, min_sep),
        Command::Metrics { input, common, max_hops, per_gateway, format, path_cap } => {
            commands::metrics(&input, &common, max_hops, per_gateway, &format, path_cap)
        }
        Command::Simulate { input, common, max_hops, seed, clients, runs, duration } => {
            let opts = commands::SimulateOptions { max_hops, seed, clients, runs, duration };
            commands::simulate(&input, &common, opts)
        }
        Command::Distance { input, common, max_hops, samples, seed, no_bias } => {
            commands::distance(&input, &common, max_hops, samples, seed, no_bias)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
