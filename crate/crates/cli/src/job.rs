//! Job resolution: one fully-resolved config per run.
//!
//! A job can be described three ways — a config file, command-line flags, or
//! environment overrides — and they stack in that order (file, then flags,
//! then `TOOLSTREAM_SEED` / `TOOLSTREAM_OUT`). Whatever wins is written back
//! beside the outputs as `config.json`, so any finished run carries the exact
//! recipe that re-runs it bit-for-bit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use toolstream_core::dataset::ToolSpec;
use toolstream_core::trainer::{
    chunk_groups, desk_preset, load_groups, GroupSpec, RunConfig, Strategy,
};

use crate::errors::CliError;

/// Environment override for the run seed; applies last.
pub const ENV_SEED: &str = "TOOLSTREAM_SEED";
/// Environment override for the output directory; applies last.
pub const ENV_OUT: &str = "TOOLSTREAM_OUT";

/// Filename of the resolved config written into every output directory.
pub const CONFIG_FILE: &str = "config.json";

/// Everything a run needs, with nothing left implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    /// Tool registry JSON; the built-in registry when absent.
    #[serde(default)]
    pub registry: Option<PathBuf>,
    /// Corpus directory written by `synth`; when absent, the corpus is
    /// synthesized in memory from the run seed.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// Conversations per tool for in-memory synthesis.
    pub per_tool: usize,
    /// Group layout: `<groups>x<tools-per-group>` over the registry order,
    /// or a path to a JSON list of named groups.
    pub groups: String,
    /// Strategies to run, in order. Each gets its own subdirectory.
    pub strategies: Vec<String>,
    /// Run directory; every artifact lands under it.
    pub out: PathBuf,
    /// Numeric configuration: model sizes, stage plans, budgets, seed.
    pub run: RunConfig,
}

/// Flags shared by the commands that launch runs. Every field is optional
/// here; [`resolve`] folds them over the config file and the defaults.
#[derive(Debug, clap::Args)]
pub struct JobArgs {
    /// Job config JSON. A resolved config re-runs to identical outputs.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Numeric preset: "desk" (default) or "paper". Overrides the config
    /// file's run block wholesale.
    #[arg(long)]
    pub preset: Option<String>,
    /// Tool registry JSON (built-in registry when omitted).
    #[arg(long)]
    pub registry: Option<PathBuf>,
    /// Corpus directory from `synth` (in-memory synthesis when omitted).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Conversations per tool for in-memory synthesis.
    #[arg(long)]
    pub per_tool: Option<usize>,
    /// Group layout: NxM (N groups of M registry tools) or a JSON path.
    #[arg(long)]
    pub groups: Option<String>,
    /// Comma-separated strategies: joint, sequential, rehearsal:<n>, colt.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Run directory for all outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite outputs that already exist.
    #[arg(long)]
    pub force: bool,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<JobConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Environment(format!("{}: {e}", path.display()))
        })?;
        let job: JobConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        job.run.validate()?;
        Ok(job)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("job config serializes") + "\n"
    }
}

/// Folds defaults, config file, flags, and environment into one job.
pub fn resolve(args: &JobArgs) -> Result<JobConfig, CliError> {
    let mut job = match &args.config {
        Some(path) => JobConfig::load(path)?,
        None => JobConfig {
            registry: None,
            corpus: None,
            per_tool: 50,
            groups: "5x2".to_string(),
            strategies: vec!["colt".to_string()],
            out: PathBuf::new(),
            run: desk_preset(),
        },
    };
    if let Some(name) = &args.preset {
        job.run = RunConfig::preset(name)?;
    }
    if let Some(p) = &args.registry {
        job.registry = Some(p.clone());
    }
    if let Some(p) = &args.corpus {
        job.corpus = Some(p.clone());
    }
    if let Some(n) = args.per_tool {
        job.per_tool = n;
    }
    if let Some(g) = &args.groups {
        job.groups = g.clone();
    }
    if let Some(s) = &args.strategy {
        job.strategies = s.split(',').map(|p| p.trim().to_string()).collect();
    }
    if let Some(p) = &args.out {
        job.out = p.clone();
    }
    if let Some(seed) = args.seed {
        job.run.seed = seed;
    }
    if let Ok(value) = std::env::var(ENV_SEED) {
        job.run.seed = value.parse().map_err(|_| {
            CliError::Config(format!("{ENV_SEED}={value:?} is not a valid seed"))
        })?;
    }
    if let Ok(value) = std::env::var(ENV_OUT) {
        job.out = PathBuf::from(value);
    }
    if job.out.as_os_str().is_empty() {
        return Err(CliError::Config(
            "no output directory: pass --out, set TOOLSTREAM_OUT, or put \"out\" in the config"
                .to_string(),
        ));
    }
    if job.per_tool == 0 {
        return Err(CliError::Config("per_tool must be positive".to_string()));
    }
    job.run.validate()?;
    parse_strategies(&job.strategies)?;
    Ok(job)
}

/// Parses every strategy name up front so a bad one fails before any work.
pub fn parse_strategies(names: &[String]) -> Result<Vec<Strategy>, CliError> {
    if names.is_empty() {
        return Err(CliError::Config("no strategies given".to_string()));
    }
    names
        .iter()
        .map(|n| n.parse::<Strategy>().map_err(CliError::from))
        .collect()
}

/// Directory name for a strategy's outputs (`rehearsal:50` → `rehearsal-50`).
pub fn strategy_dir_name(s: Strategy) -> String {
    s.to_string().replace(':', "-")
}

/// Turns the `groups` field into concrete named groups: `NxM` tiles the
/// registry in order; anything else is read as a groups JSON file.
pub fn resolve_groups(
    spec: &str,
    registry: &[ToolSpec],
) -> Result<Vec<GroupSpec>, CliError> {
    if let Some((n, m)) = spec.split_once('x') {
        if let (Ok(n), Ok(m)) = (n.parse::<usize>(), m.parse::<usize>()) {
            return Ok(chunk_groups(registry, n, m)?);
        }
    }
    Ok(load_groups(Path::new(spec))?)
}

/// Refuses to overwrite `path` unless `--force` was given.
pub fn guard_clobber(path: &Path, force: bool) -> Result<(), CliError> {
    if path.exists() && !force {
        return Err(CliError::Environment(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
}

/// Writes the resolved config into the run directory. A directory that
/// already holds a *different* resolved config is refused (mixing configs
/// would make its artifacts incomparable); an identical one is fine, so
/// strategies can accumulate under one run directory across invocations.
pub fn write_resolved_config(job: &JobConfig, force: bool) -> Result<(), CliError> {
    let path = job.out.join(CONFIG_FILE);
    if path.exists() && !force {
        let existing: JobConfig = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if &existing != job {
            return Err(CliError::Config(format!(
                "{} holds a different configuration; use a fresh --out or pass --force",
                path.display()
            )));
        }
    }
    write_text(&path, &job.to_json_pretty())
}
