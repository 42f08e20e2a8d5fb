//! `toolstream synth` — write a deterministic corpus directory.
//!
//! Synthesizes `per_tool` conversations for every registry tool, splits them
//! 9:1 per tool, and lays the result out under the output directory with a
//! checksummed manifest (see [`crate::corpus`]). Same registry, seed, and
//! knobs always produce byte-identical files, manifest included.

use toolstream_core::dataset::{
    builtin_registry, load_registry, split_train_test, synthesize_corpus_with,
    synthesize_general, SynthOptions,
};

use crate::corpus::{write_corpus_dir, GENERAL_SEED_XOR, MANIFEST_FILE};
use crate::errors::{CliError, EXIT_OK};
use crate::job::{guard_clobber, resolve, write_resolved_config, JobArgs};

pub fn run(args: &JobArgs) -> Result<i32, CliError> {
    let mut job = resolve(args)?;
    // A synthesized directory is self-contained; a corpus path in the job
    // would claim this corpus came from somewhere else.
    job.corpus = None;
    let registry = match &job.registry {
        Some(path) => load_registry(path)?,
        None => builtin_registry(),
    };
    guard_clobber(&job.out.join(MANIFEST_FILE), args.force)?;

    let opts = SynthOptions {
        feature_dim: job.run.feature_dim,
        patches: job.run.patches,
        cluster_noise: job.run.cluster_noise,
    };
    let corpus = synthesize_corpus_with(&registry, job.per_tool, job.run.seed, &opts)?;
    let (train, test) = split_train_test(&corpus, job.run.seed)?;
    let general = synthesize_general(
        job.run.general_count,
        job.run.seed ^ GENERAL_SEED_XOR,
        &opts,
    );

    let manifest = write_corpus_dir(
        &job.out,
        &registry,
        &train,
        &test,
        &general,
        job.run.seed,
        job.per_tool,
        job.run.feature_dim,
        job.run.patches,
        job.run.cluster_noise,
    )?;
    write_resolved_config(&job, true)?;

    for (tool, count) in &manifest.counts {
        println!("{tool}: {} train / {} test", count.train, count.test);
    }
    println!(
        "wrote {} tool(s), {} general record(s) to {}",
        manifest.counts.len(),
        manifest.general,
        job.out.display()
    );
    Ok(EXIT_OK)
}
