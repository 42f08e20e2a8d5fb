//! Scratch calibration probe for the directional stream plan. Not a test.

use std::collections::BTreeMap;
use std::time::Instant;

use toolstream_core::codebook::select_topk;
use toolstream_core::dataset::{
    builtin_registry, synthesize_corpus_with, synthesize_general, SynthOptions,
};
use toolstream_core::metrics::{average_accuracy, average_forgetting};
use toolstream_core::model::encode_query;
use toolstream_core::numerics::seeded_rng;
use toolstream_core::trainer::{
    build_stream, chunk_groups, desk_preset, evaluate_accuracy, init_pipeline, predict_calls,
    run_continual, run_stage, BatchSource, RunConfig, StagePlan, Strategy, Stream, ALIGNMENT,
    REFINEMENT, ROUTING,
};

struct ProbeArgs {
    steps: usize,
    lr3: f64,
    top_k: usize,
    routing_frac: f64,
    lambda_commit: f64,
    seed: u64,
    lambda_quant: f64,
    codebook_size: usize,
}

fn cfg_with(a: &ProbeArgs) -> RunConfig {
    let mut cfg = desk_preset();
    cfg.seed = a.seed;
    if std::env::var("PROBE_DESK").is_err() {
        cfg.context_width = 16;
        cfg.hidden_width = 24;
        cfg.feature_dim = 8;
        cfg.patches = 2;
        cfg.include_round_two = false;
        cfg.general_count = 20;
        cfg.max_gen_len = 24;
        cfg.stage1 = StagePlan { steps: 60, batch_size: 8, learning_rate: 1e-2, warmup_steps: 4 };
        cfg.stage2 = StagePlan { steps: a.steps, batch_size: 8, learning_rate: 1e-2, warmup_steps: 4 };
        cfg.stage3 = StagePlan { steps: a.steps, batch_size: 8, learning_rate: a.lr3, warmup_steps: 4 };
    } else {
        cfg.stage3.learning_rate = a.lr3;
    }
    if std::env::var("PROBE_NO_ST").is_ok() {
        cfg.straight_through = false;
    }
    if let Ok(c) = std::env::var("PROBE_C") {
        cfg.context_width = c.parse().unwrap();
    }
    cfg.codebook_size = a.codebook_size;
    cfg.top_k = a.top_k;
    cfg.lambda_commit = a.lambda_commit;
    cfg.lambda_quant = a.lambda_quant;
    cfg.steps_per_group = a.steps;
    cfg
}

/// Per-tool histogram of selected codebook rows over a group's test split.
fn tool_histograms(
    pipe: &toolstream_core::trainer::Pipeline,
    cfg: &RunConfig,
    group: &toolstream_core::trainer::GroupData,
) -> BTreeMap<String, BTreeMap<usize, usize>> {
    let mut per_tool: BTreeMap<String, BTreeMap<usize, usize>> = BTreeMap::new();
    for inst in &group.test {
        let label = inst.tool_labels.first().cloned().unwrap_or_default();
        let q = encode_query(&pipe.model, &inst.instruction_tokens).unwrap();
        let sel = select_topk(&pipe.codebook, &q, cfg.top_k).unwrap();
        let hist = per_tool.entry(label).or_default();
        for &i in &sel.indices {
            *hist.entry(i).or_default() += 1;
        }
    }
    per_tool
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Prints per-tool query-cloud geometry: pairwise cosines between tool mean
/// queries and the mean cosine of each tool's queries to its own mean.
fn query_geometry(pipe: &toolstream_core::trainer::Pipeline, stream: &Stream, label: &str) {
    let mut tools: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for group in &stream.groups {
        for inst in &group.test {
            let q = encode_query(&pipe.model, &inst.instruction_tokens).unwrap();
            tools
                .entry(inst.tool_labels.first().cloned().unwrap_or_default())
                .or_default()
                .push(q);
        }
    }
    let names: Vec<&String> = tools.keys().collect();
    let means: Vec<Vec<f64>> = names
        .iter()
        .map(|n| {
            let qs = &tools[*n];
            let c = qs[0].len();
            let mut m = vec![0.0; c];
            for q in qs {
                for (mi, qi) in m.iter_mut().zip(q) {
                    *mi += qi / qs.len() as f64;
                }
            }
            m
        })
        .collect();
    println!("    geometry {label}:");
    for (i, n) in names.iter().enumerate() {
        let within: f64 = tools[*n]
            .iter()
            .map(|q| cosine(q, &means[i]))
            .sum::<f64>()
            / tools[*n].len() as f64;
        let cross: Vec<String> = (0..names.len())
            .filter(|&j| j != i)
            .map(|j| format!("{:.2}", cosine(&means[i], &means[j])))
            .collect();
        println!("      {n}: within {within:.3} cross [{}]", cross.join(" "));
    }
}

/// Colt-style run with an adjustable routing share, printing per-group
/// accuracy with and without prompts plus the rows each tool selects.
fn colt_diag(cfg: &RunConfig, stream: &Stream, routing_frac: f64) {
    let mut rng = seeded_rng(cfg.seed);
    let mut pipe = init_pipeline(cfg, stream.vocab.len(), &mut rng);
    query_geometry(&pipe, stream, "at init");
    for group in &stream.groups {
        for (tool, hist) in tool_histograms(&pipe, cfg, group) {
            println!("      init {tool}: {hist:?}");
        }
    }
    run_stage(
        &mut pipe,
        cfg,
        &ALIGNMENT,
        BatchSource::Uniform(&stream.general),
        &cfg.stage1,
        &mut rng,
    )
    .unwrap();
    let budget = cfg.steps_per_group;
    let routing_steps = (budget as f64 * routing_frac).round() as usize;
    for g in 0..stream.groups.len() {
        let current = &stream.groups[g].train;
        if routing_steps > 0 {
            let plan = StagePlan { steps: routing_steps, ..cfg.stage2 };
            run_stage(&mut pipe, cfg, &ROUTING, BatchSource::Uniform(current), &plan, &mut rng)
                .unwrap();
        }
        if budget > routing_steps {
            let plan = StagePlan { steps: budget - routing_steps, ..cfg.stage3 };
            run_stage(&mut pipe, cfg, &REFINEMENT, BatchSource::Uniform(current), &plan, &mut rng)
                .unwrap();
        }
        print!("    after group {}:", g + 1);
        for (j, seen) in stream.groups.iter().enumerate().take(g + 1) {
            let with =
                evaluate_accuracy(&pipe, cfg, &stream.vocab, &stream.tool_names, true, &seen.test)
                    .unwrap();
            let without =
                evaluate_accuracy(&pipe, cfg, &stream.vocab, &stream.tool_names, false, &seen.test)
                    .unwrap();
            print!("  g{}:{:.2}/{:.2}", j + 1, with, without);
        }
        println!();
        for (j, seen) in stream.groups.iter().enumerate().take(g + 1) {
            for (tool, hist) in tool_histograms(&pipe, cfg, seen) {
                println!("      g{} {tool}: {hist:?}", j + 1);
            }
            // What does the model actually emit for this group right now?
            let mut emitted: BTreeMap<String, usize> = BTreeMap::new();
            for inst in &seen.test {
                let calls =
                    predict_calls(&pipe, cfg, &stream.vocab, &stream.tool_names, true, inst)
                        .unwrap();
                let label = calls
                    .first()
                    .map(|c| c.api_name.clone())
                    .unwrap_or_else(|| "-".to_string());
                *emitted.entry(label).or_default() += 1;
            }
            println!("      g{} emits {emitted:?}", j + 1);
        }
    }
    query_geometry(&pipe, stream, "after stream");
}

fn summarize(outcome: &toolstream_core::trainer::ContinualOutcome) -> (f64, f64) {
    let k = outcome.matrix.seen();
    let aa = average_accuracy(&outcome.matrix, k).unwrap();
    let af = average_forgetting(&outcome.matrix, k).unwrap();
    (aa, af)
}

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let a = ProbeArgs {
        steps: argv.first().and_then(|s| s.parse().ok()).unwrap_or(600),
        lr3: argv.get(1).and_then(|s| s.parse().ok()).unwrap_or(1e-2),
        top_k: argv.get(2).and_then(|s| s.parse().ok()).unwrap_or(3),
        routing_frac: argv.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.5),
        lambda_commit: argv.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.25),
        seed: argv.get(5).and_then(|s| s.parse().ok()).unwrap_or(1),
        lambda_quant: argv.get(6).and_then(|s| s.parse().ok()).unwrap_or(1.0),
        codebook_size: argv.get(7).and_then(|s| s.parse().ok()).unwrap_or(12),
    };
    let registry: Vec<_> = builtin_registry().into_iter().take(6).collect();
    let groups = chunk_groups(&registry, 3, 2).unwrap();
    let cfg = cfg_with(&a);
    let opts = SynthOptions {
        feature_dim: cfg.feature_dim,
        patches: cfg.patches,
        cluster_noise: cfg.cluster_noise,
    };
    let corpus = synthesize_corpus_with(&registry, 200, a.seed, &opts).unwrap();
    let general = synthesize_general(cfg.general_count, a.seed ^ 1, &opts);
    let stream = build_stream(&registry, &groups, &corpus, &general, &cfg).unwrap();
    println!(
        "seed {} steps {} lr3 {} K {} routing {} l2 {} vocab {}",
        a.seed,
        a.steps,
        a.lr3,
        a.top_k,
        a.routing_frac,
        a.lambda_commit,
        stream.vocab.len()
    );
    println!("  colt diagnostics (with-prompts/without-prompts):");
    let t = Instant::now();
    colt_diag(&cfg, &stream, a.routing_frac);
    println!("    [{:.1}s]", t.elapsed().as_secs_f64());
    for strategy in [Strategy::Sequential, Strategy::Rehearsal { buffer_per_tool: 50 }, Strategy::Colt]
    {
        let t = Instant::now();
        let outcome = run_continual(&cfg, strategy, &stream).unwrap();
        let (aa, af) = summarize(&outcome);
        print!("  {strategy:?}: AA {aa:.3} AF {af:.3}  rows");
        for k in 1..=outcome.matrix.seen() {
            print!("  [");
            for j in 1..=k {
                print!("{:.2} ", outcome.matrix.a(k, j).unwrap());
            }
            print!("]");
        }
        println!("  [{:.1}s]", t.elapsed().as_secs_f64());
    }
}
