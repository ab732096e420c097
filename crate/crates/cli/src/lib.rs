//! Command-line driver: `train`, `eval`, `bench`, `mesh` and `make-scene`,
//! all configured by one JSON document plus `--set key=value` overrides.

pub mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Process exit code with its cause.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_USAGE,
            error: error.into(),
        }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            error: error.into(),
        }
    }
}

pub(crate) trait OrExit<T> {
    fn or_usage(self) -> Result<T, Failure>;
    fn or_runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_usage(self) -> Result<T, Failure> {
        self.map_err(Failure::usage)
    }

    fn or_runtime(self) -> Result<T, Failure> {
        self.map_err(Failure::runtime)
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct Common {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set trainer.iterations=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run seed; overrides `trainer.seed`.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoints, loss log and manifest.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from this checkpoint.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
    /// Render held-out views from a checkpoint and report PSNR.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Comma-separated view ids of the evaluation split.
        #[arg(long, value_delimiter = ',', value_name = "IDS")]
        views: Option<Vec<usize>>,
    },
    /// Train and evaluate every variant of a matrix config; writes bench.csv and bench.md.
    Bench {
        #[command(flatten)]
        common: Common,
    },
    /// Export the density iso-surface of a checkpoint as binary STL.
    Mesh {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Overrides `export.iso`.
        #[arg(long)]
        iso: Option<f64>,
        /// Cubic sampling resolution; overrides `export.resolution`.
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Render the analytic scene in `dataset.analytic` to a scene directory.
    MakeScene {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Parser)]
#[command(name = "fewt", version, about = "Few-shot factorized radiance fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn command_with_help() -> clap::Command {
    let keys = config::keys_help();
    let mut cmd = Cli::command().after_long_help(keys.clone());
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for n in names {
        let keys = keys.clone();
        cmd = cmd.mut_subcommand(n, move |s| s.after_long_help(keys));
    }
    cmd
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let matches = match command_with_help().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}
