//! `pacbayes`: train a network, certify posterior families over a grid, probe
//! the loss landscape and draw Risk–Complexity plots.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 for usage errors such as a
//! bad config or a missing input file.

mod config;
mod manifest;
mod plot;
mod run;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<pacbayes::Error> for CliError {
    fn from(e: pacbayes::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "pacbayes", version, about = "PAC-Bayes certificates for small feedforward classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the network and record θ₀ and θ*.
    Train(RunArgs),
    /// Sweep every configured posterior family and write certificate CSVs.
    Certify(RunArgs),
    /// Loss along random directions through θ*, with quadratic fits.
    Probe(RunArgs),
    /// Render certificate CSVs as a Risk–Complexity SVG.
    Plot(PlotArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set certify.m=100`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory, overriding the config and `PACBAYES_OUT`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PlotArgs {
    /// Certificate CSVs.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Reference point CSV written by `certify`.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Logarithmic empirical-risk axis.
    #[arg(long)]
    pub log_x: bool,
    /// Destination; standard output when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run::train(&a),
        Command::Certify(a) => run::certify(&a),
        Command::Probe(a) => run::probe(&a),
        Command::Plot(a) => plot::command(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::FAILURE,
            }
        }
    }
}
