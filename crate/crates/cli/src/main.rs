//! Batch command line for the continual tool-usage pipeline.
//!
//! One command per process, everything under a run directory, and every run
//! a pure function of its resolved config — see the subcommand modules for
//! what each writes.

mod commands;
mod corpus;
mod errors;
mod job;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use errors::EXIT_CONFIG;
use job::JobArgs;

const EXIT_CODE_HELP: &str = "Exit codes:
  0  success
  1  domain failure: violations found, training diverged, incomplete run
  2  environment failure: I/O errors, or existing outputs without --force
  3  config failure: bad flags, presets, strategies, or config files

Environment overrides (applied last): TOOLSTREAM_SEED, TOOLSTREAM_OUT.";

#[derive(Parser)]
#[command(
    name = "toolstream",
    version,
    about = "Continual tool-usage pipeline: synthesize, validate, train, stream, report",
    after_help = EXIT_CODE_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Audit a conversation corpus against the schema and a tool registry.
    Validate {
        /// Corpus JSONL file to check.
        #[arg(long)]
        corpus: PathBuf,
        /// Tool registry JSON (built-in registry when omitted).
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Also write the violation lines to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Synthesize a corpus directory: per-tool train/test files, visual
    /// features, and a checksummed manifest.
    Synth {
        #[command(flatten)]
        job: JobArgs,
    },
    /// Run the staged schedule (alignment, routing, refinement) on all tools.
    Train {
        #[command(flatten)]
        job: JobArgs,
        /// Which stage to run: 1, 2, 3, or all. Stages 2 and 3 start from
        /// the previous stage's checkpoint.
        #[arg(long, default_value = "all")]
        stage: String,
    },
    /// Run continual-learning strategies over an arriving tool stream.
    Continual {
        #[command(flatten)]
        job: JobArgs,
    },
    /// Summarize a run directory's strategies side by side (CSV in, CSV out).
    Report {
        /// Run directory holding one subdirectory per strategy.
        #[arg(long)]
        run: PathBuf,
        /// Overwrite an existing report.csv.
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; anything else is a config
            // mistake and exits accordingly.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(EXIT_CONFIG as u8);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let result = match &cli.cmd {
        Cmd::Validate {
            corpus,
            registry,
            report,
        } => commands::validate::run(corpus, registry.as_ref(), report.as_ref()),
        Cmd::Synth { job } => commands::synth::run(job),
        Cmd::Train { job, stage } => commands::train::run(job, stage),
        Cmd::Continual { job } => commands::continual::run(job),
        Cmd::Report { run, force } => commands::report::run(run, *force),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("toolstream: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
