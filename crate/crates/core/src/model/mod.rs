//! Compact conditional decoder: vocabulary, network, and instance building.
//!
//! [`vocab`] turns conversations into closed-vocabulary token streams and
//! parses generated streams back into tool calls; [`net`] holds the model
//! parameters and their exact gradients. [`Instance`] is the meeting point:
//! one training/evaluation example with its raw visual features, encoded
//! instruction, encoded target, and the reference calls used for scoring.

mod net;
mod vocab;

pub use net::{
    assemble_sequence, decode_backward, decode_loss, embed_tokens, embed_tokens_backward,
    encode_query, encode_query_backward, generate, init_model, project_visual,
    project_visual_backward, ModelDims, ModelState, PromptPosition, SeqLayout,
};
pub use vocab::{
    instruction_words, normalize_words, parse_predicted_calls, target_words, Vocab, ACT_CLOSE,
    ACT_OPEN, BOS, EOS, PAD, PARAM_MARK, ROUND_SEP, UNK,
};

use crate::dataset::{SynthSample, ToolCall};
use crate::numerics::{NumericsError, Tensor2};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("word {word:?} is not in the vocabulary")]
    VocabMiss { word: String },
    #[error("instruction produced no tokens")]
    EmptyInstruction,
    #[error("target produced no tokens")]
    EmptyTarget,
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("conversation has no turn {index}")]
    MissingTurn { index: usize },
    #[error("expected width {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One encoded example: everything a training step or an evaluation pass
/// needs, with no further text processing.
#[derive(Debug, Clone)]
pub struct Instance {
    /// Raw visual patch features (patches × feature_dim), pre-projector.
    pub visual: Tensor2,
    /// Encoded opening instruction.
    pub instruction_tokens: Vec<usize>,
    /// Encoded target stream (calls, answer, optional wrap-up round, eos).
    pub target_tokens: Vec<usize>,
    /// Ground-truth calls of the opening assistant turn, for scoring.
    pub reference_calls: Vec<ToolCall>,
    /// Tool labels this example exercises (empty for no-tool examples).
    pub tool_labels: Vec<String>,
}

/// Encodes a synthesized sample against a fixed vocabulary.
///
/// `strict` controls unknown-word handling: training data must encode
/// exactly (an unknown word there means the vocabulary and the corpus are
/// out of sync), while held-out text degrades to `<unk>`.
pub fn build_instance(
    sample: &SynthSample,
    vocab: &Vocab,
    include_round_two: bool,
    strict: bool,
) -> Result<Instance, ModelError> {
    let conv = &sample.conversation;
    let instr = instruction_words(conv)?;
    let target = target_words(conv, include_round_two)?;
    let instruction_tokens = if strict {
        vocab.encode_strict(&instr)?
    } else {
        vocab.encode_lenient(&instr)
    };
    let target_tokens = vocab.encode_strict(&target)?;
    if target_tokens.is_empty() {
        return Err(ModelError::EmptyTarget);
    }
    Ok(Instance {
        visual: sample.visual.clone(),
        instruction_tokens,
        target_tokens,
        reference_calls: conv.reference_calls(),
        tool_labels: conv.tool_labels(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{builtin_registry, synthesize_corpus};

    #[test]
    fn instances_build_from_synthetic_corpus() {
        let reg = builtin_registry();
        let samples = synthesize_corpus(&reg, 2, 41).unwrap();
        let vocab = Vocab::build(&reg, samples.iter().map(|s| &s.conversation));
        for sample in &samples {
            let inst = build_instance(sample, &vocab, true, true).unwrap();
            assert!(!inst.instruction_tokens.is_empty());
            assert_eq!(inst.target_tokens.last(), Some(&vocab.eos()));
            assert_eq!(inst.tool_labels, sample.conversation.tool_labels());
            // Round-two encoding must still parse back to the same calls.
            let names = reg.iter().map(|t| t.name.clone()).collect();
            let parsed = parse_predicted_calls(&inst.target_tokens, &vocab, &names);
            assert_eq!(parsed, inst.reference_calls);
        }
    }

    #[test]
    fn strict_instance_fails_on_foreign_vocabulary() {
        let reg = builtin_registry();
        let samples = synthesize_corpus(&reg, 1, 42).unwrap();
        // Vocabulary from a single conversation cannot cover the others.
        let vocab = Vocab::build(&reg, [&samples[0].conversation]);
        let miss = samples
            .iter()
            .any(|s| matches!(
                build_instance(s, &vocab, true, true),
                Err(ModelError::VocabMiss { .. })
            ));
        assert!(miss, "expected at least one vocabulary miss");
    }
}
