mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use nesua_core::experiment::SweepKind;
use nesua_core::Error;

/// Energy-saving user association: simulate, train, evaluate and sweep.
#[derive(Debug, Parser)]
#[command(name = "nesua", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a dataset of scenarios and write it with a manifest.
    Gen(Common),
    /// Train a model; resumes when the output directory holds a compatible run.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset written by `gen`; generated in memory when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare the trained model with RSRP, GA-SubSINR and the exhaustive oracle.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`; without one only the baselines run.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Train and evaluate one model per grid point.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Comma-separated grid: MHz for `bandwidth`, lambda2/lambda1 for `lambda`.
        /// Defaults to the matching `eval.*_grid` entry.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file with `scenario`, `power`, `gat`, `train` and `eval` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the top-level `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Bandwidth,
    Lambda,
}

impl From<Kind> for SweepKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Bandwidth => SweepKind::Bandwidth,
            Kind::Lambda => SweepKind::Lambda,
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) => 2,
        Error::Io(_) | Error::Json(_) => 3,
        Error::NonFinite { .. } => 4,
        _ => 1,
    }
}

fn run(cli: Cli) -> nesua_core::Result<()> {
    match cli.command {
        Command::Gen(c) => commands::gen(&config::load(c.config.as_deref(), c.seed, c.out)?),
        Command::Train { common: c, dataset } => {
            commands::train(&config::load(c.config.as_deref(), c.seed, c.out)?, dataset.as_deref())
        }
        Command::Eval {
            common: c,
            checkpoint,
            dataset,
        } => commands::eval(
            &config::load(c.config.as_deref(), c.seed, c.out)?,
            checkpoint.as_deref(),
            dataset.as_deref(),
        ),
        Command::Sweep { common: c, kind, grid } => {
            commands::sweep(&config::load(c.config.as_deref(), c.seed, c.out)?, kind.into(), grid)
        }
    }
}

fn main() -> ExitCode {
    let help = format!(
        "Exit status: 0 ok, 2 configuration error, 3 I/O error, 4 training diverged, 1 other.\n\
         NESUA_THREADS caps the number of sweep points run in parallel.\n\n\
         Default configuration:\n\n{}",
        config::defaults_toml()
    );
    let matches = Cli::command()
        .after_long_help(help.clone())
        .mut_subcommands(|c| c.after_long_help(help.clone()))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
