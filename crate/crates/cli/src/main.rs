use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mfs_cli::commands::{self, Outcome};
use mfs_cli::config::Config;

/// Multiple-frame two-stage survey estimation.
///
/// Every command reads a TOML config; any of its keys can be overridden on
/// the command line as `--section.key value`.
#[derive(Parser)]
#[command(name = "mfs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Run {
    /// TOML config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Key overrides, `--section.key value` or `--section.key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// K-means clustering of a raster into psu labels.
    Cluster(Run),
    /// Assign sample points to the psus of each frame.
    Assign(Run),
    /// Build a population file from points, a list frame and label rasters.
    Frames(Run),
    /// Single- and multiple-frame estimates for every frame combination.
    Estimate(Run),
    /// Enumeration and Monte Carlo checks of unbiasedness and variance.
    Oracle(Run),
    /// Generate a synthetic population and run a Monte Carlo study.
    Simulate(Run),
    /// Recompute the published single-frame and comparison tables.
    Reproduce(Run),
}

type Handler = fn(&Config, &mut dyn Write) -> anyhow::Result<Outcome>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (run, handler): (Run, Handler) = match cli.command {
        Command::Cluster(r) => (r, commands::cluster),
        Command::Assign(r) => (r, commands::assign),
        Command::Frames(r) => (r, commands::frames),
        Command::Estimate(r) => (r, commands::estimate),
        Command::Oracle(r) => (r, commands::oracle),
        Command::Simulate(r) => (r, commands::simulate),
        Command::Reproduce(r) => (r, commands::reproduce),
    };
    let result = Config::load(run.config.as_deref(), &run.overrides)
        .and_then(|config| handler(&config, &mut std::io::stdout().lock()));
    match result {
        Ok(outcome) if outcome.passed() => ExitCode::SUCCESS,
        Ok(outcome) => {
            for name in outcome.failed() {
                eprintln!("check failed: {name}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
