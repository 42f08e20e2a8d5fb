//! `toolstream train` — the staged schedule on a fixed tool set.
//!
//! Stage 1 aligns the visual projector on no-tool data, stage 2 trains the
//! prompt table and query encoder against a frozen decoder, stage 3 refines
//! everything together. Each completed stage writes `stage<N>.ckpt` and
//! `stage<N>.records.jsonl`; a later stage starts from the previous stage's
//! checkpoint, and because the checkpoint carries the RNG position, running
//! `--stage 1` then `--stage 2` is bit-identical to `--stage all` through
//! stage 2.

use std::path::Path;

use toolstream_core::trainer::{
    build_stream_presplit, init_pipeline, load_matching, run_stage, save_checkpoint,
    BatchSource, GroupSpec, Pipeline, StepRecord, ALIGNMENT, REFINEMENT, ROUTING,
};
use toolstream_core::numerics::{seeded_rng, Rng};

use crate::corpus::prepare_data;
use crate::errors::{CliError, EXIT_OK};
use crate::job::{create_dir, guard_clobber, resolve, write_resolved_config, write_text, JobArgs};

fn parse_stages(stage: &str) -> Result<Vec<usize>, CliError> {
    match stage {
        "1" => Ok(vec![1]),
        "2" => Ok(vec![2]),
        "3" => Ok(vec![3]),
        "all" => Ok(vec![1, 2, 3]),
        other => Err(CliError::Config(format!(
            "unknown stage {other:?} (expected 1, 2, 3, or all)"
        ))),
    }
}

pub(crate) fn records_to_jsonl(records: &[StepRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("step record serializes"));
        out.push('\n');
    }
    out
}

fn ckpt_path(out: &Path, stage: usize) -> std::path::PathBuf {
    out.join(format!("stage{stage}.ckpt"))
}

pub fn run(args: &JobArgs, stage: &str) -> Result<i32, CliError> {
    let stages = parse_stages(stage)?;
    let job = resolve(args)?;
    let data = prepare_data(&job)?;

    // The staged schedule trains on all tools at once; the stream machinery
    // still does the encoding and pooling, with one group holding everything.
    let all_tools = GroupSpec {
        name: "all".to_string(),
        tools: data.registry.iter().map(|t| t.name.clone()).collect(),
    };
    let stream = build_stream_presplit(
        &data.registry,
        &[all_tools],
        &data.train,
        &data.test,
        &data.general,
        &job.run,
    )?;

    create_dir(&job.out)?;
    write_resolved_config(&job, args.force)?;
    stream
        .vocab
        .save(&job.out.join("vocab.txt"))
        .map_err(|e| CliError::Environment(format!("vocab.txt: {e}")))?;

    let hash = job.run.hash();
    // Carried across stages within one invocation; reloaded from the
    // previous stage's checkpoint otherwise.
    let mut carried: Option<(Pipeline, Rng)> = None;

    for s in stages {
        let target = ckpt_path(&job.out, s);
        guard_clobber(&target, args.force)?;
        let (mut pipe, mut rng) = match carried.take() {
            Some(state) => state,
            None if s == 1 => {
                let mut rng = seeded_rng(job.run.seed);
                let pipe = init_pipeline(&job.run, stream.vocab.len(), &mut rng);
                (pipe, rng)
            }
            None => {
                let prev = ckpt_path(&job.out, s - 1);
                if !prev.exists() {
                    return Err(CliError::Domain(format!(
                        "stage {s} needs {}; run --stage {} first",
                        prev.display(),
                        s - 1
                    )));
                }
                let ckpt = load_matching(&prev, &hash)?;
                (ckpt.pipeline, ckpt.rng)
            }
        };

        let (desc, plan, pool) = match s {
            1 => (&ALIGNMENT, &job.run.stage1, &stream.general),
            2 => (&ROUTING, &job.run.stage2, &stream.joint_pool),
            _ => (&REFINEMENT, &job.run.stage3, &stream.joint_pool),
        };
        let records = run_stage(
            &mut pipe,
            &job.run,
            desc,
            BatchSource::Uniform(pool),
            plan,
            &mut rng,
        )?;

        save_checkpoint(&target, &pipe, &rng, &hash)?;
        write_text(
            &job.out.join(format!("stage{s}.records.jsonl")),
            &records_to_jsonl(&records),
        )?;
        match records.last() {
            Some(last) => println!(
                "stage {s} ({}): {} step(s), final loss {:.6}",
                desc.name,
                records.len(),
                last.loss
            ),
            None => println!("stage {s} ({}): 0 steps configured", desc.name),
        }
        carried = Some((pipe, rng));
    }
    Ok(EXIT_OK)
}
