//! `toolstream continual` — strategies over an arriving tool stream.
//!
//! Builds the grouped stream once, then runs every requested strategy on it
//! from the same initialization. Each strategy writes its own subdirectory:
//! the triangular accuracy matrix as CSV, the AA/AF summary, the per-step
//! training log, and a final checkpoint. Identical config and seed produce
//! identical CSVs, byte for byte.

use toolstream_core::metrics::{matrix_to_csv, summary_to_csv};
use toolstream_core::trainer::{build_stream_presplit, run_continual, save_checkpoint};

use crate::commands::train::records_to_jsonl;
use crate::corpus::prepare_data;
use crate::errors::{CliError, EXIT_OK};
use crate::job::{
    create_dir, guard_clobber, parse_strategies, resolve, resolve_groups, strategy_dir_name,
    write_resolved_config, JobArgs,
};

pub fn run(args: &JobArgs) -> Result<i32, CliError> {
    let job = resolve(args)?;
    let strategies = parse_strategies(&job.strategies)?;
    let data = prepare_data(&job)?;
    let groups = resolve_groups(&job.groups, &data.registry)?;
    let stream = build_stream_presplit(
        &data.registry,
        &groups,
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
    let groups_json = serde_json::to_string_pretty(&groups).expect("groups serialize") + "\n";
    crate::job::write_text(&job.out.join("groups.json"), &groups_json)?;

    let hash = job.run.hash();
    for strategy in strategies {
        let dir = job.out.join(strategy_dir_name(strategy));
        guard_clobber(&dir.join("matrix.csv"), args.force)?;
        create_dir(&dir)?;

        let outcome = run_continual(&job.run, strategy, &stream)?;

        crate::job::write_text(&dir.join("matrix.csv"), &matrix_to_csv(&outcome.matrix))?;
        crate::job::write_text(&dir.join("summary.csv"), &summary_to_csv(&outcome.matrix)?)?;
        crate::job::write_text(
            &dir.join("records.jsonl"),
            &records_to_jsonl(&outcome.records),
        )?;
        save_checkpoint(&dir.join("final.ckpt"), &outcome.pipeline, &outcome.rng, &hash)?;

        let af = match outcome.final_average_forgetting {
            Some(v) => format!("{v:.6}"),
            None => "undefined".to_string(),
        };
        println!(
            "{strategy}: AA_final={:.6} AF_final={af}",
            outcome.final_average_accuracy
        );
    }
    Ok(EXIT_OK)
}
