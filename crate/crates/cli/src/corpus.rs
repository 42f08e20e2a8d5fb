//! Corpus directories: how `synth` lays a corpus on disk and how the run
//! commands load it back.
//!
//! Layout under the corpus directory:
//!
//! ```text
//! manifest.json                 counts, synthesis knobs, file checksums
//! registry.json                 the registry the corpus was built from
//! train/<tool>.jsonl            conversations, one per line
//! train/<tool>.features.jsonl   visual feature rows, aligned line-for-line
//! test/<tool>.jsonl             held-out conversations
//! test/<tool>.features.jsonl
//! general.jsonl                 no-tool alignment records (when requested)
//! general.features.jsonl
//! ```
//!
//! Per-tool files preserve the split's within-stratum order and the loader
//! visits tools in sorted order — the same order the splitter emits — so a
//! corpus that round-trips through disk feeds training the identical sample
//! sequence. Every file's SHA-256 sits in the manifest; the loader verifies
//! all of them before trusting a byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use toolstream_core::dataset::{
    load_registry, read_corpus, save_registry, write_corpus, Conversation, SynthSample,
    ToolSpec, GENERAL_LABEL,
};
use toolstream_core::numerics::Tensor2;

use crate::errors::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const REGISTRY_FILE: &str = "registry.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCount {
    pub train: usize,
    pub test: usize,
}

/// What `synth` promises about a corpus directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub per_tool: usize,
    pub general: usize,
    pub feature_dim: usize,
    pub patches: usize,
    pub cluster_noise: f64,
    /// Per-tool train/test counts, sorted by tool name.
    pub counts: BTreeMap<String, SplitCount>,
    /// Relative path to SHA-256 (lowercase hex) for every data file.
    pub files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

fn features_lines(samples: &[&SynthSample]) -> String {
    let mut out = String::new();
    for s in samples {
        let rows: Vec<&[f64]> = (0..s.visual.rows()).map(|i| s.visual.row(i)).collect();
        out.push_str(&serde_json::to_string(&rows).expect("feature rows serialize"));
        out.push('\n');
    }
    out
}

/// Writes one split's per-tool files and records them in the manifest.
fn write_split(
    dir: &Path,
    split: &str,
    samples: &[SynthSample],
    files: &mut BTreeMap<String, String>,
) -> Result<BTreeMap<String, usize>, CliError> {
    let split_dir = dir.join(split);
    crate::job::create_dir(&split_dir)?;
    let mut by_tool: BTreeMap<&str, Vec<&SynthSample>> = BTreeMap::new();
    for s in samples {
        by_tool.entry(&s.tool).or_default().push(s);
    }
    let mut counts = BTreeMap::new();
    for (tool, group) in by_tool {
        let conv_rel = format!("{split}/{tool}.jsonl");
        let conv_path = dir.join(&conv_rel);
        let convs: Vec<Conversation> = group.iter().map(|s| s.conversation.clone()).collect();
        write_corpus(&conv_path, &convs)?;
        files.insert(conv_rel.clone(), sha256_hex(&read_bytes(&conv_path)?));

        let feat_rel = format!("{split}/{tool}.features.jsonl");
        let feat_text = features_lines(&group);
        crate::job::write_text(&dir.join(&feat_rel), &feat_text)?;
        files.insert(feat_rel, sha256_hex(feat_text.as_bytes()));

        counts.insert(tool.to_string(), group.len());
    }
    Ok(counts)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
pub fn write_corpus_dir(
    dir: &Path,
    registry: &[ToolSpec],
    train: &[SynthSample],
    test: &[SynthSample],
    general: &[SynthSample],
    seed: u64,
    per_tool: usize,
    feature_dim: usize,
    patches: usize,
    cluster_noise: f64,
) -> Result<Manifest, CliError> {
    crate::job::create_dir(dir)?;
    let mut files = BTreeMap::new();

    save_registry(&dir.join(REGISTRY_FILE), registry)?;
    files.insert(
        REGISTRY_FILE.to_string(),
        sha256_hex(&read_bytes(&dir.join(REGISTRY_FILE))?),
    );

    let train_counts = write_split(dir, "train", train, &mut files)?;
    let test_counts = write_split(dir, "test", test, &mut files)?;

    if !general.is_empty() {
        let convs: Vec<Conversation> =
            general.iter().map(|s| s.conversation.clone()).collect();
        write_corpus(&dir.join("general.jsonl"), &convs)?;
        files.insert(
            "general.jsonl".to_string(),
            sha256_hex(&read_bytes(&dir.join("general.jsonl"))?),
        );
        let refs: Vec<&SynthSample> = general.iter().collect();
        let feat_text = features_lines(&refs);
        crate::job::write_text(&dir.join("general.features.jsonl"), &feat_text)?;
        files.insert(
            "general.features.jsonl".to_string(),
            sha256_hex(feat_text.as_bytes()),
        );
    }

    let mut counts = BTreeMap::new();
    for (tool, n) in &train_counts {
        counts.insert(
            tool.clone(),
            SplitCount {
                train: *n,
                test: test_counts.get(tool).copied().unwrap_or(0),
            },
        );
    }
    for (tool, n) in &test_counts {
        counts.entry(tool.clone()).or_insert(SplitCount {
            train: 0,
            test: *n,
        });
    }

    let manifest = Manifest {
        seed,
        per_tool,
        general: general.len(),
        feature_dim,
        patches,
        cluster_noise,
        counts,
        files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    crate::job::write_text(&dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

/// A corpus read back from disk, checksum-verified.
#[derive(Debug)]
pub struct LoadedCorpus {
    pub registry: Vec<ToolSpec>,
    pub train: Vec<SynthSample>,
    pub test: Vec<SynthSample>,
    pub general: Vec<SynthSample>,
    pub manifest: Manifest,
}

fn parse_features(path: &Path, expected: usize) -> Result<Vec<Tensor2>, CliError> {
    let text = crate::job::read_text(path)?;
    let mut tensors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let rows: Vec<Vec<f64>> = serde_json::from_str(line).map_err(|e| {
            CliError::Domain(format!("{} line {}: {e}", path.display(), i + 1))
        })?;
        tensors.push(Tensor2::from_rows(rows));
    }
    if tensors.len() != expected {
        return Err(CliError::Domain(format!(
            "{}: {} feature lines for {} conversations",
            path.display(),
            tensors.len(),
            expected
        )));
    }
    Ok(tensors)
}

fn load_split(
    dir: &Path,
    split: &str,
    tool: &str,
    expected: usize,
) -> Result<Vec<SynthSample>, CliError> {
    if expected == 0 {
        return Ok(Vec::new());
    }
    let conv_path = dir.join(format!("{split}/{tool}.jsonl"));
    let convs = read_corpus(&conv_path)?;
    if convs.len() != expected {
        return Err(CliError::Domain(format!(
            "{}: manifest promises {} records, found {}",
            conv_path.display(),
            expected,
            convs.len()
        )));
    }
    let feats = parse_features(
        &dir.join(format!("{split}/{tool}.features.jsonl")),
        convs.len(),
    )?;
    Ok(convs
        .into_iter()
        .zip(feats)
        .map(|(conversation, visual)| SynthSample {
            tool: tool.to_string(),
            conversation,
            visual,
        })
        .collect())
}

pub fn load_corpus_dir(dir: &Path) -> Result<LoadedCorpus, CliError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: Manifest = serde_json::from_str(&crate::job::read_text(&manifest_path)?)
        .map_err(|e| CliError::Domain(format!("{}: {e}", manifest_path.display())))?;

    // Verify every checksum before parsing anything.
    for (rel, expected) in &manifest.files {
        let actual = sha256_hex(&read_bytes(&dir.join(rel))?);
        if &actual != expected {
            return Err(CliError::Domain(format!(
                "{}: checksum mismatch (corpus modified since synthesis?)",
                dir.join(rel).display()
            )));
        }
    }

    let registry = load_registry(&dir.join(REGISTRY_FILE))?;
    let mut train = Vec::new();
    let mut test = Vec::new();
    // Tools in sorted order — the same order the splitter emits — so the
    // loaded sequence matches an in-memory split of the same corpus.
    for (tool, count) in &manifest.counts {
        train.extend(load_split(dir, "train", tool, count.train)?);
        test.extend(load_split(dir, "test", tool, count.test)?);
    }
    let general = if manifest.general > 0 {
        let convs = read_corpus(&dir.join("general.jsonl"))?;
        let feats = parse_features(&dir.join("general.features.jsonl"), convs.len())?;
        convs
            .into_iter()
            .zip(feats)
            .map(|(conversation, visual)| SynthSample {
                tool: GENERAL_LABEL.to_string(),
                conversation,
                visual,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(LoadedCorpus {
        registry,
        train,
        test,
        general,
        manifest,
    })
}

/// Resolved paths a run consumes, wherever the corpus came from.
pub struct PreparedData {
    pub registry: Vec<ToolSpec>,
    pub train: Vec<SynthSample>,
    pub test: Vec<SynthSample>,
    pub general: Vec<SynthSample>,
}

/// Alignment data comes from a seed stream of its own, so the no-tool
/// records never correlate with the tool corpus drawn from the run seed.
pub const GENERAL_SEED_XOR: u64 = 0x6765_6e65_7261_6c; // "general"

/// Loads the corpus directory when the job names one, otherwise synthesizes
/// in memory from the run seed. Either way the result is checked against the
/// run's feature dimensions.
pub fn prepare_data(job: &crate::job::JobConfig) -> Result<PreparedData, CliError> {
    use toolstream_core::dataset::{
        builtin_registry, split_train_test, synthesize_corpus_with, synthesize_general,
        SynthOptions,
    };
    let opts = SynthOptions {
        feature_dim: job.run.feature_dim,
        patches: job.run.patches,
        cluster_noise: job.run.cluster_noise,
    };
    match &job.corpus {
        Some(dir) => {
            let loaded = load_corpus_dir(dir)?;
            if loaded.manifest.feature_dim != job.run.feature_dim
                || loaded.manifest.patches != job.run.patches
            {
                return Err(CliError::Config(format!(
                    "corpus {} was synthesized at feature_dim={} patches={}, \
                     but the run wants feature_dim={} patches={}",
                    dir.display(),
                    loaded.manifest.feature_dim,
                    loaded.manifest.patches,
                    job.run.feature_dim,
                    job.run.patches
                )));
            }
            Ok(PreparedData {
                registry: loaded.registry,
                train: loaded.train,
                test: loaded.test,
                general: loaded.general,
            })
        }
        None => {
            let registry = match &job.registry {
                Some(path) => load_registry(path)?,
                None => builtin_registry(),
            };
            let corpus = synthesize_corpus_with(&registry, job.per_tool, job.run.seed, &opts)?;
            let (train, test) = split_train_test(&corpus, job.run.seed)?;
            let general = synthesize_general(
                job.run.general_count,
                job.run.seed ^ GENERAL_SEED_XOR,
                &opts,
            );
            Ok(PreparedData {
                registry,
                train,
                test,
                general,
            })
        }
    }
}
