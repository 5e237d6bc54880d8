//! Batch command-line front end for the nonparametric inference library.
//!
//! Every command is a pure function of its input files, configuration and
//! seed; chains run concurrently but are written in chain order.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{CommandKind, RunConfig};
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "bnp",
    version,
    about = "Bayesian nonparametric mixture and factor models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw synthetic data and ground truth from a generative model.
    Simulate(CommandArgs),
    /// Fit a Dirichlet-process mixture by collapsed Gibbs sampling.
    FitMixture(CommandArgs),
    /// Fit an Indian-buffet latent factor model by Gibbs sampling.
    FitFactors(CommandArgs),
    /// Fit a truncated stick-breaking mixture by coordinate ascent.
    FitVi(CommandArgs),
    /// Summarise traces across chains and run sampler self-checks.
    Diagnose(CommandArgs),
}

#[derive(Debug, Args)]
struct CommandArgs {
    /// Flat `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Settings as `--key value` or `--key=value`; these override the file.
    #[arg(
        trailing_var_arg = true,
        allow_hyphen_values = true,
        value_name = "--KEY VALUE"
    )]
    overrides: Vec<String>,
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version; a closed pipe is not worth reporting
            let _ = write!(std::io::stdout(), "{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Config(e.to_string().trim_end().to_string())),
    };
    let (kind, args) = match &cli.command {
        Command::Simulate(a) => (CommandKind::Simulate, a),
        Command::FitMixture(a) => (CommandKind::FitMixture, a),
        Command::FitFactors(a) => (CommandKind::FitFactors, a),
        Command::FitVi(a) => (CommandKind::FitVi, a),
        Command::Diagnose(a) => (CommandKind::Diagnose, a),
    };
    let cfg = RunConfig::load(kind, args.config.as_deref(), &args.overrides)?;
    cfg.seed()?;
    match kind {
        CommandKind::Simulate => commands::simulate::run(&cfg),
        CommandKind::FitMixture => commands::fit_mixture::run(&cfg),
        CommandKind::FitFactors => commands::fit_factors::run(&cfg),
        CommandKind::FitVi => commands::fit_vi::run(&cfg),
        CommandKind::Diagnose => commands::diagnose::run(&cfg),
    }
}
