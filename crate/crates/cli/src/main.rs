mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Graphic mean curvature flow experiments.
#[derive(Parser, Debug)]
#[command(name = "mcf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured flow, writing a time series and checkpoints.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads; overrides run.threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the property suites and refinement studies and write a report.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Gaussian density probe over a set of checkpoints.
    Monitor {
        /// Glob matching at least three checkpoint files.
        #[arg(long)]
        checkpoints: String,
        /// Comma-separated ambient coordinates, or `grid:i,j,..` for the
        /// graph point at that grid index of the latest checkpoint.
        #[arg(long, allow_hyphen_values = true)]
        y0: String,
        #[arg(long, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run { config, out, threads } => commands::run(&config, &out, threads),
        Command::Verify { config, out, threads } => commands::verify(config.as_deref(), &out, threads),
        Command::Monitor { checkpoints, y0, t0, epsilon, config, out, threads } => {
            commands::monitor(&commands::MonitorArgs { checkpoints, y0, t0, epsilon, config, out, threads })
        }
    };
    ExitCode::from(code)
}
