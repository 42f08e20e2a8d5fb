//! End-to-end tests of the `toolstream` binary: every subcommand, the exit
//! code contract, clobber protection, determinism across invocations, and
//! the equivalences the surface promises (staged training composes; joint
//! ignores grouping; a corpus read from disk trains identically to one
//! synthesized in memory).

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use toolstream_core::dataset::{builtin_registry, save_registry};
use toolstream_core::trainer::{desk_preset, RunConfig, StagePlan};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_toolstream"));
    // Hermetic: the suite controls these explicitly where it tests them.
    cmd.env_remove("TOOLSTREAM_SEED");
    cmd.env_remove("TOOLSTREAM_OUT");
    cmd
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "expected success, got {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("no signal")
}

/// A run config small enough that whole pipelines finish in well under a
/// second, with every stage still doing real optimization steps.
fn tiny_run() -> RunConfig {
    let mut run = desk_preset();
    run.context_width = 10;
    run.hidden_width = 12;
    run.feature_dim = 6;
    run.patches = 2;
    run.codebook_size = 5;
    run.top_k = 2;
    run.include_round_two = false;
    run.general_count = 6;
    run.max_gen_len = 16;
    run.steps_per_group = 6;
    run.stage1 = StagePlan {
        steps: 3,
        batch_size: 4,
        learning_rate: 1e-2,
        warmup_steps: 1,
    };
    run.stage2 = StagePlan {
        steps: 4,
        batch_size: 4,
        learning_rate: 1e-2,
        warmup_steps: 1,
    };
    run.stage3 = StagePlan {
        steps: 4,
        batch_size: 4,
        learning_rate: 1e-2,
        warmup_steps: 1,
    };
    run
}

fn write_registry(dir: &Path, tools: usize) -> PathBuf {
    let path = dir.join("registry.json");
    let registry: Vec<_> = builtin_registry().into_iter().take(tools).collect();
    save_registry(&path, &registry).unwrap();
    path
}

fn write_job(
    dir: &Path,
    name: &str,
    registry: &Path,
    out: &Path,
    groups: &str,
    strategies: &[&str],
    run: &RunConfig,
) -> PathBuf {
    let path = dir.join(name);
    let job = serde_json::json!({
        "registry": registry,
        "corpus": null,
        "per_tool": 10,
        "groups": groups,
        "strategies": strategies,
        "out": out,
        "run": run,
    });
    std::fs::write(&path, serde_json::to_string_pretty(&job).unwrap()).unwrap();
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Mean of the last evaluation row in a matrix CSV.
fn final_row_mean(csv: &str) -> f64 {
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for line in csv.lines().skip(1) {
        let mut parts = line.split(',');
        let k: usize = parts.next().unwrap().parse().unwrap();
        let _j = parts.next().unwrap();
        let a: f64 = parts.next().unwrap().parse().unwrap();
        rows.push((k, a));
    }
    let last = rows.iter().map(|(k, _)| *k).max().unwrap();
    let finals: Vec<f64> = rows
        .iter()
        .filter(|(k, _)| *k == last)
        .map(|(_, a)| *a)
        .collect();
    finals.iter().sum::<f64>() / finals.len() as f64
}

#[test]
fn synth_writes_nine_to_one_splits_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let out = tmp.path().join("corpus");
    run_ok(bin().args([
        "synth",
        "--registry",
        registry.to_str().unwrap(),
        "--per-tool",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]));
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out.join("manifest.json"))).unwrap();
    for (tool, count) in manifest["counts"].as_object().unwrap() {
        assert_eq!(count["train"], 9, "tool {tool}");
        assert_eq!(count["test"], 1, "tool {tool}");
    }
    assert!(out.join("train/action-recognition.jsonl").exists());
    assert!(out.join("train/action-recognition.features.jsonl").exists());
    assert!(out.join("config.json").exists(), "resolved config is written");
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for out in [&a, &b] {
        run_ok(bin().args([
            "synth",
            "--registry",
            registry.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]));
    }
    run_ok(bin()
        .args([
            "synth",
            "--registry",
            registry.to_str().unwrap(),
            "--out",
            c.to_str().unwrap(),
        ])
        .env("TOOLSTREAM_SEED", "1234"));
    assert_eq!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(b.join("manifest.json")).unwrap(),
        "same seed, same bytes"
    );
    let mc: serde_json::Value = serde_json::from_str(&read(&c.join("manifest.json"))).unwrap();
    assert_eq!(mc["seed"], 1234, "TOOLSTREAM_SEED overrides the config seed");
    assert_ne!(
        std::fs::read(a.join("manifest.json")).unwrap(),
        std::fs::read(c.join("manifest.json")).unwrap()
    );
}

#[test]
fn synth_refuses_to_clobber_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let out = tmp.path().join("corpus");
    let args = |out: &Path| {
        vec![
            "synth".to_string(),
            "--registry".into(),
            registry.to_str().unwrap().into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    run_ok(bin().args(args(&out)));
    assert_eq!(exit_code(bin().args(args(&out))), 2, "clobber is refused");
    let mut forced = args(&out);
    forced.push("--force".into());
    run_ok(bin().args(forced));
}

#[test]
fn validate_reports_violations_and_maps_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let out = tmp.path().join("corpus");
    run_ok(bin().args([
        "synth",
        "--registry",
        registry.to_str().unwrap(),
        "--per-tool",
        "10",
        "--out",
        out.to_str().unwrap(),
    ]));
    let clean = out.join("train/action-recognition.jsonl");
    run_ok(bin().args([
        "validate",
        "--corpus",
        clean.to_str().unwrap(),
        "--registry",
        registry.to_str().unwrap(),
    ]));

    // Rename a tool inside one record: parses fine, fails validation.
    let dirty = tmp.path().join("dirty.jsonl");
    let text = read(&clean).replace("action-recognition", "unheard-of-tool");
    std::fs::write(&dirty, text).unwrap();
    let report = tmp.path().join("violations.txt");
    let output = bin()
        .args([
            "validate",
            "--corpus",
            dirty.to_str().unwrap(),
            "--registry",
            registry.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "violations exit 1");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("UNKNOWN_TOOL"), "stdout: {stdout}");
    assert!(read(&report).contains("UNKNOWN_TOOL"));

    assert_eq!(
        exit_code(bin().args(["validate", "--corpus", "/nonexistent/corpus.jsonl"])),
        2,
        "unreadable file exits 2"
    );
}

#[test]
fn train_stage_by_stage_composes_to_stage_all() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let all_dir = tmp.path().join("all");
    let step_dir = tmp.path().join("steps");
    let run = tiny_run();
    let all_job = write_job(tmp.path(), "all.json", &registry, &all_dir, "2x1", &["colt"], &run);
    let step_job = write_job(tmp.path(), "step.json", &registry, &step_dir, "2x1", &["colt"], &run);

    run_ok(bin().args(["train", "--config", all_job.to_str().unwrap(), "--stage", "all"]));
    for stage in ["1", "2", "3"] {
        run_ok(bin().args(["train", "--config", step_job.to_str().unwrap(), "--stage", stage]));
    }
    for stage in ["1", "2", "3"] {
        let a = std::fs::read(all_dir.join(format!("stage{stage}.ckpt"))).unwrap();
        let b = std::fs::read(step_dir.join(format!("stage{stage}.ckpt"))).unwrap();
        assert_eq!(a, b, "stage {stage} checkpoints must be byte-identical");
    }
}

#[test]
fn train_without_prerequisite_checkpoint_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let out = tmp.path().join("run");
    let job = write_job(tmp.path(), "job.json", &registry, &out, "2x1", &["colt"], &tiny_run());
    let output = bin()
        .args(["train", "--config", job.to_str().unwrap(), "--stage", "2"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "dependency failure exits 1");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("stage1.ckpt"), "stderr: {stderr}");
}

#[test]
fn continual_writes_artifacts_and_report_reads_them_back() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let out = tmp.path().join("run");
    let job = write_job(
        tmp.path(),
        "job.json",
        &registry,
        &out,
        "2x1",
        &["sequential", "colt"],
        &tiny_run(),
    );
    let output = run_ok(bin().args(["continual", "--config", job.to_str().unwrap()]));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("AA_final"), "stdout: {stdout}");

    for strategy in ["sequential", "colt"] {
        let dir = out.join(strategy);
        for artifact in ["matrix.csv", "summary.csv", "records.jsonl", "final.ckpt"] {
            assert!(dir.join(artifact).exists(), "{strategy}/{artifact}");
        }
        let matrix = read(&dir.join("matrix.csv"));
        assert!(matrix.starts_with("k,j,accuracy\n"));
        // Two groups: rows (1,1), (2,1), (2,2).
        assert_eq!(matrix.lines().count(), 4);
    }

    let report = run_ok(bin().args(["report", "--run", out.to_str().unwrap()]));
    let table = String::from_utf8_lossy(&report.stdout);
    let cols: Vec<&str> = table.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(cols, vec!["metric", "colt", "sequential"], "alphabetical columns");
    assert!(table.contains("AA_final"));
    assert!(table.contains("AF_final"));
    let csv = read(&out.join("report.csv"));
    assert!(csv.starts_with("strategy,aa_final,af_final\n"));
    assert!(csv.lines().nth(1).unwrap().starts_with("colt,"));
}

#[test]
fn continual_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let run = tiny_run();
    let mut matrices = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let job = write_job(
            tmp.path(),
            &format!("{name}.json"),
            &registry,
            &out,
            "2x1",
            &["colt"],
            &run,
        );
        run_ok(bin().args(["continual", "--config", job.to_str().unwrap()]));
        matrices.push(std::fs::read(out.join("colt/matrix.csv")).unwrap());
    }
    assert_eq!(matrices[0], matrices[1], "identical config, identical CSV");
}

#[test]
fn continual_from_disk_corpus_matches_in_memory_synthesis() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    let run = tiny_run();
    let corpus = tmp.path().join("corpus");
    let mem_out = tmp.path().join("mem");
    let disk_out = tmp.path().join("disk");

    // Synthesize to disk with the same run block the experiments use.
    let synth_job = write_job(tmp.path(), "synth.json", &registry, &corpus, "2x1", &["colt"], &run);
    run_ok(bin().args(["synth", "--config", synth_job.to_str().unwrap(), "--per-tool", "10"]));

    let mem_job = write_job(tmp.path(), "mem.json", &registry, &mem_out, "2x1", &["colt"], &run);
    run_ok(bin().args(["continual", "--config", mem_job.to_str().unwrap()]));
    let disk_job = write_job(tmp.path(), "disk.json", &registry, &disk_out, "2x1", &["colt"], &run);
    run_ok(bin().args([
        "continual",
        "--config",
        disk_job.to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
    ]));

    assert_eq!(
        std::fs::read(mem_out.join("colt/matrix.csv")).unwrap(),
        std::fs::read(disk_out.join("colt/matrix.csv")).unwrap(),
        "a corpus that round-trips through disk must train identically"
    );
}

#[test]
fn joint_final_accuracy_ignores_grouping() {
    let tmp = tempfile::tempdir().unwrap();
    let registry = write_registry(tmp.path(), 2);
    // Equal total budget: one group at 12 steps vs two groups at 6 each.
    let mut wide = tiny_run();
    wide.steps_per_group = 12;
    let mut deep = tiny_run();
    deep.steps_per_group = 6;
    // Equal test-set sizes per tool make the union accuracy the mean of the
    // per-tool accuracies, so the two layouts are directly comparable.
    let wide_out = tmp.path().join("wide");
    let deep_out = tmp.path().join("deep");
    let wide_job = write_job(tmp.path(), "wide.json", &registry, &wide_out, "1x2", &["joint"], &wide);
    let deep_job = write_job(tmp.path(), "deep.json", &registry, &deep_out, "2x1", &["joint"], &deep);
    run_ok(bin().args(["continual", "--config", wide_job.to_str().unwrap()]));
    run_ok(bin().args(["continual", "--config", deep_job.to_str().unwrap()]));
    let wide_mean = final_row_mean(&read(&wide_out.join("joint/matrix.csv")));
    let deep_mean = final_row_mean(&read(&deep_out.join("joint/matrix.csv")));
    assert!(
        (wide_mean - deep_mean).abs() < 1e-12,
        "joint must not care how tools are grouped: {wide_mean} vs {deep_mean}"
    );
}

#[test]
fn config_errors_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        exit_code(bin().args([
            "continual",
            "--out",
            out.to_str().unwrap(),
            "--strategy",
            "mystery",
        ])),
        3
    );
    assert_eq!(
        exit_code(bin().args(["train", "--out", out.to_str().unwrap(), "--preset", "huge"])),
        3
    );
    assert_eq!(
        exit_code(bin().args(["continual", "--strategy", "colt"])),
        3,
        "missing --out is a config error"
    );
    assert_eq!(
        exit_code(bin().args(["continual", "--definitely-not-a-flag"])),
        3,
        "unknown flags are config errors"
    );
}

#[test]
fn report_on_incomplete_run_warns_and_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = tmp.path().join("run");
    std::fs::create_dir_all(run_dir.join("colt")).unwrap();
    std::fs::write(
        run_dir.join("colt/matrix.csv"),
        "k,j,accuracy\n1,1,0.5\n",
    )
    .unwrap();
    std::fs::create_dir_all(run_dir.join("sequential")).unwrap(); // no matrix
    let output = bin()
        .args(["report", "--run", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "partial report exits 1");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("sequential"), "stderr: {stderr}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("colt"), "the complete strategy still reports");
    assert!(stdout.contains("undefined"), "single-group AF is undefined");
}

#[test]
fn help_and_version_exit_zero() {
    run_ok(bin().arg("--help"));
    run_ok(bin().arg("--version"));
    let help = run_ok(bin().arg("--help"));
    let text = String::from_utf8_lossy(&help.stdout);
    assert!(text.contains("Exit codes"), "help documents the exit contract");
}
