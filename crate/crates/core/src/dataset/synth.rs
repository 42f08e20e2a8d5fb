//! Synthetic corpus generation.
//!
//! Every tool gets `per_tool` conversations built from ten sentence frames,
//! several verb phrases, and lexical perturbations (noun synonyms, openers,
//! sign-offs), paired with visual features drawn from a per-tool Gaussian
//! cluster. The instructions carry the lexical signal and the features carry
//! the visual signal a model needs to tell tools apart; both are deterministic
//! in the seed so a corpus can be regenerated byte-for-byte.

use rand::Rng as _;

use super::registry::ToolSpec;
use super::reformat::reformat_plain_instruction;
use super::schema::{Conversation, ToolCall, Turn};
use super::DatasetError;
use crate::numerics::{seeded_rng, Rng, Tensor2};

/// Stratum label for samples that call no tool.
pub const GENERAL_LABEL: &str = "general";

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthOptions {
    /// Width of each visual feature row.
    pub feature_dim: usize,
    /// Rows (patches) per sample.
    pub patches: usize,
    /// Std of the noise around each tool's cluster centre.
    pub cluster_noise: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            feature_dim: 32,
            patches: 4,
            cluster_noise: 0.35,
        }
    }
}

/// One training sample: the conversation, its stratum label (the generating
/// tool, or [`GENERAL_LABEL`]) and the paired visual features.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub tool: String,
    pub conversation: Conversation,
    pub visual: Tensor2,
}

// Sentence frames shared by all tools; `{vp}` is the tool-specific verb
// phrase, `{video}` a synonym slot. Ten frames keeps the surface forms
// varied enough that train/test splits do not reduce to memorized strings.
// The frames stay nearly bare on purpose: the verb phrase carries almost all
// of the words, so instructions for different tools share little vocabulary
// and their encodings stay well separated.
const FRAMES: [&str; 10] = [
    "{vp}.",
    "Please {vp}.",
    "{vp} in this {video}.",
    "{vp}, please.",
    "Could you {vp}?",
    "{vp} for me.",
    "Now {vp}.",
    "{vp} here.",
    "For this {video}, {vp}.",
    "{vp} right away.",
];

const VIDEO_WORDS: [&str; 4] = ["video", "clip", "footage", "recording"];
const OPENERS: [&str; 3] = ["", "Hey assistant, ", "Quick request: "];

struct Phrases {
    verb_phrases: &'static [&'static str],
    result: &'static str,
}

// Each tool owns a small set of anchor words (its verb plus one or two
// nouns) repeated across all of its phrases, while different tools never
// share an anchor. The repetition keeps one tool's instructions close
// together in encoding space and the disjoint anchors keep different tools
// apart, which is what lets a router tell them apart from text alone.
fn phrases_for(name: &str) -> Option<Phrases> {
    let (verb_phrases, result): (&[&str], &str) = match name {
        "action-recognition" => (
            &[
                "recognize the activity performed by the person",
                "recognize the main activity performed here",
                "recognize the exact activity performed on camera",
                "recognize the physical activity performed in view",
                "recognize the ongoing activity performed throughout",
            ],
            "the main activity was identified.",
        ),
        "dense-video-caption" => (
            &[
                "write dense captions for every scene",
                "write flowing captions for each scene",
                "write detailed captions covering every scene",
                "write rich captions narrating each scene",
                "write short captions describing every scene",
            ],
            "captions for each scene were written.",
        ),
        "temporal-action-localization" => (
            &[
                "localize the timestamps where each action happens",
                "localize the exact timestamps of every action",
                "localize the timestamps marking action boundaries",
                "localize the precise timestamps of each action",
                "localize the timestamps when the action occurs",
            ],
            "the action boundaries were marked.",
        ),
        "ocr" => (
            &[
                "read the lettering visible on screen",
                "read any lettering shown on screen",
                "read the printed lettering on screen",
                "read whatever lettering appears on screen",
                "read the subtitle lettering on screen",
            ],
            "the on-screen lettering was extracted.",
        ),
        "asr" => (
            &[
                "transcribe the speech into written words",
                "transcribe every speech segment you hear",
                "transcribe the speech from the audio track",
                "transcribe the speech of every voice",
                "transcribe the background speech as well",
            ],
            "the transcript is ready.",
        ),
        "video-relation-detection" => (
            &[
                "detect the interactions between the entities",
                "detect pairwise interactions among the entities",
                "detect how the entities form interactions",
                "detect the interactions linking the entities",
                "detect which entities share interactions",
            ],
            "the entity interactions were detected.",
        ),
        "video-object-segmentation" => (
            &[
                "produce segmentation masks for every object",
                "produce clean segmentation masks per object",
                "produce tight segmentation masks around each object",
                "produce segmentation masks outlining the object",
                "produce accurate segmentation masks for the object",
            ],
            "the object masks were produced.",
        ),
        "text-to-video-generation" => (
            &[
                "generate brand new footage from my description",
                "generate fresh footage matching the description",
                "generate original footage based on the description",
                "generate creative footage following the description",
                "generate new footage that fits the description",
            ],
            "the generated footage is ready.",
        ),
        _ => return None,
    };
    Some(Phrases {
        verb_phrases,
        result,
    })
}

// Custom registries without stock phrases still synthesize: lean on the
// display name for the lexical signal.
fn fallback_verb_phrase(display: &str, variant: usize) -> String {
    let lower = display.to_lowercase();
    match variant % 3 {
        0 => format!("run the {lower} analysis"),
        1 => format!("apply the {lower} tool"),
        _ => format!("perform {lower} processing"),
    }
}

fn verb_phrase(spec: &ToolSpec, registry: &[ToolSpec], rng: &mut Rng) -> String {
    if spec.is_composite() {
        let parts: Vec<String> = spec
            .composite_of
            .iter()
            .map(|member| {
                let member_spec = registry
                    .iter()
                    .find(|t| &t.name == member)
                    .expect("registry checked before synthesis");
                verb_phrase(member_spec, registry, rng)
            })
            .collect();
        return parts.join(" and then ");
    }
    match phrases_for(&spec.name) {
        Some(p) => p.verb_phrases[rng.gen_range(0..p.verb_phrases.len())].to_string(),
        None => fallback_verb_phrase(&spec.display, rng.gen_range(0..3)),
    }
}

fn result_phrase(name: &str, display: &str) -> String {
    match phrases_for(name) {
        Some(p) => p.result.to_string(),
        None => format!("the {} run completed.", display.to_lowercase()),
    }
}

fn default_param_value(key: &str) -> &'static str {
    match key {
        "granularity" => "word",
        "quality" => "high",
        _ => "default",
    }
}

fn call_for(spec: &ToolSpec) -> ToolCall {
    let mut call = ToolCall::new(spec.name.clone());
    for key in spec.param_schema.keys() {
        call.api_params
            .insert(key.clone(), default_param_value(key).to_string());
    }
    call
}

fn calls_for(spec: &ToolSpec, registry: &[ToolSpec]) -> Vec<ToolCall> {
    if spec.is_composite() {
        spec.composite_of
            .iter()
            .map(|member| {
                let member_spec = registry
                    .iter()
                    .find(|t| &t.name == member)
                    .expect("registry checked before synthesis");
                call_for(member_spec)
            })
            .collect()
    } else {
        vec![call_for(spec)]
    }
}

fn instruction(spec: &ToolSpec, registry: &[ToolSpec], rng: &mut Rng) -> String {
    let frame = FRAMES[rng.gen_range(0..FRAMES.len())];
    let video = VIDEO_WORDS[rng.gen_range(0..VIDEO_WORDS.len())];
    let vp = verb_phrase(spec, registry, rng);
    let body = frame.replace("{vp}", &vp).replace("{video}", video);
    let mut chars = body.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => body,
    }
}

fn conversation_for(spec: &ToolSpec, registry: &[ToolSpec], rng: &mut Rng) -> Conversation {
    let display = &spec.display;
    let thought = match rng.gen_range(0..2) {
        0 => format!("The request calls for the {display} tool."),
        _ => format!("This needs the {display} tool to handle it."),
    };
    let value = match rng.gen_range(0..2) {
        0 => format!("Sure thing! I'll run the {display} tool now. Please wait."),
        _ => format!("Certainly, starting the {display} run right away."),
    };
    let calls = calls_for(spec, registry);
    let relay = calls
        .iter()
        .map(|c| {
            let result = registry
                .iter()
                .find(|t| t.name == c.api_name)
                .map(|t| result_phrase(&t.name, &t.display))
                .unwrap_or_else(|| "done.".to_string());
            format!("{} output: {}", c.api_name, result)
        })
        .collect::<Vec<_>>()
        .join(" ");
    let wrap_thought = format!("The {display} run has finished; time to report back.");
    let wrap_value = match rng.gen_range(0..2) {
        0 => format!("Here is what the {display} run produced. Anything else?"),
        _ => format!("The {display} results are in. Let me know if you need more."),
    };
    Conversation::new(vec![
        Turn::human(instruction(spec, registry, rng)),
        Turn::gpt(thought, calls, value),
        Turn::human(relay),
        Turn::gpt(wrap_thought, vec![], wrap_value),
    ])
}

fn cluster_rows(center: &[f64], opts: &SynthOptions, rng: &mut Rng) -> Tensor2 {
    let normal = rand_distr::Normal::new(0.0, opts.cluster_noise).expect("valid noise std");
    let mut rows = Vec::with_capacity(opts.patches);
    for _ in 0..opts.patches {
        let row: Vec<f64> = center
            .iter()
            .map(|c| c + rand_distr::Distribution::sample(&normal, rng))
            .collect();
        rows.push(row);
    }
    Tensor2::from_rows(rows)
}

/// Synthesizes `per_tool` conversations for every registry tool with default
/// feature dimensions.
pub fn synthesize_corpus(
    registry: &[ToolSpec],
    per_tool: usize,
    seed: u64,
) -> Result<Vec<SynthSample>, DatasetError> {
    synthesize_corpus_with(registry, per_tool, seed, &SynthOptions::default())
}

pub fn synthesize_corpus_with(
    registry: &[ToolSpec],
    per_tool: usize,
    seed: u64,
    opts: &SynthOptions,
) -> Result<Vec<SynthSample>, DatasetError> {
    super::registry::check_registry(registry)?;
    let mut rng = seeded_rng(seed);
    // Cluster centres first, in registry order, so adding samples never
    // moves a tool's cluster.
    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = registry
        .iter()
        .map(|_| {
            (0..opts.feature_dim)
                .map(|_| rand_distr::Distribution::sample(&normal, &mut rng))
                .collect()
        })
        .collect();

    let mut out = Vec::with_capacity(registry.len() * per_tool);
    for (spec, center) in registry.iter().zip(&centers) {
        for _ in 0..per_tool {
            let conversation = conversation_for(spec, registry, &mut rng);
            let visual = cluster_rows(center, opts, &mut rng);
            out.push(SynthSample {
                tool: spec.name.clone(),
                conversation,
                visual,
            });
        }
    }
    Ok(out)
}

const GENERAL_PAIRS: [(&str, &str); 6] = [
    (
        "What is happening in the video?",
        "A short everyday scene plays out in the clip.",
    ),
    (
        "Describe the overall mood of the clip.",
        "The clip has a calm and ordinary mood.",
    ),
    (
        "Is this video in colour?",
        "Yes, the footage is in colour.",
    ),
    (
        "Roughly how long does the clip feel?",
        "It feels like a brief clip of a few seconds.",
    ),
    (
        "Does the video look indoors or outdoors?",
        "The scene appears to be indoors.",
    ),
    (
        "Summarize the video in one sentence.",
        "Someone goes about a simple activity in a short video.",
    ),
];

/// Synthesizes no-tool question/answer records used for projector alignment
/// and as general data mixed into later stages. Features sit in a neutral
/// cluster at the origin.
pub fn synthesize_general(count: usize, seed: u64, opts: &SynthOptions) -> Vec<SynthSample> {
    let mut rng = seeded_rng(seed ^ 0x67656e6572616c); // distinct stream from the tool corpus
    let center = vec![0.0; opts.feature_dim];
    (0..count)
        .map(|_| {
            let (q, a) = GENERAL_PAIRS[rng.gen_range(0..GENERAL_PAIRS.len())];
            let opener = OPENERS[rng.gen_range(0..OPENERS.len())];
            let conversation = reformat_plain_instruction(&format!("{opener}{q}"), a);
            let visual = cluster_rows(&center, opts, &mut rng);
            SynthSample {
                tool: GENERAL_LABEL.to_string(),
                conversation,
                visual,
            }
        })
        .collect()
}
