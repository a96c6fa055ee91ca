mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Simulate dynamic assortment and pricing under censored MNL choice.
#[derive(Parser)]
#[command(name = "cmnl", version = commands::VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replicate every configured algorithm and write trace.csv plus manifest.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the config once per arm count and write sweep.csv and regret.svg.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated arm counts; defaults to the config's N.
        #[arg(long = "N", value_delimiter = ',')]
        arm_counts: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical self-checks. Exit status 1 if any fails.
    Validate,
    /// Chart the regret_mean column of one or more trace.csv files.
    Plot {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
    ChecksFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) | CliError::ChecksFailed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numerical(m) => write!(f, "runtime error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::ChecksFailed(m) => write!(f, "failed checks: {m}"),
        }
    }
}

impl From<cmnl::Error> for CliError {
    fn from(e: cmnl::Error) -> Self {
        match e {
            cmnl::Error::Config { .. } | cmnl::Error::InvalidInput(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CMNL_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("CMNL_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("CMNL_THREADS: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run { config, out } => commands::cmd_run(&config, &out),
        Command::Sweep { config, arm_counts, out } => commands::cmd_sweep(&config, arm_counts, &out),
        Command::Plot { traces, out } => commands::cmd_plot(&traces, &out),
        Command::Validate => {
            // Test hook: CMNL_VALIDATE_FAULT=gradient swaps in a wrong gradient.
            let fault = std::env::var("CMNL_VALIDATE_FAULT").unwrap_or_default();
            commands::cmd_validate(fault == "gradient")
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
