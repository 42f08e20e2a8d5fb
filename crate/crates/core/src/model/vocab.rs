//! Closed-vocabulary tokenizer, target encoding, and prediction parsing.
//!
//! Text is whitespace-split, lowercased, and stripped of edge punctuation.
//! Tool calls are encoded inline into the target stream with structural
//! markers, so "emit a tool call" and "emit an answer" are one vocabulary:
//!
//! ```text
//! <act> NAME [<p> KEY VALUE]... </act> answer words ... [<r2> ...] <eos>
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::dataset::{Conversation, ToolCall, ToolSpec};

use super::ModelError;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const ACT_OPEN: &str = "<act>";
pub const ACT_CLOSE: &str = "</act>";
pub const PARAM_MARK: &str = "<p>";
pub const ROUND_SEP: &str = "<r2>";

const STRUCTURAL: [&str; 8] = [PAD, BOS, EOS, UNK, ACT_OPEN, ACT_CLOSE, PARAM_MARK, ROUND_SEP];

/// Splits free text into normalized word tokens.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| c.is_ascii_punctuation() && c != '-' && c != '+')
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    /// Builds the vocabulary for a corpus: structural tokens first, then the
    /// registry's tool names, then every other surface token in sorted order.
    /// Building from the same corpus always yields the same table.
    pub fn build<'a>(
        registry: &[ToolSpec],
        conversations: impl IntoIterator<Item = &'a Conversation>,
    ) -> Vocab {
        let mut words: BTreeSet<String> = BTreeSet::new();
        for conv in conversations {
            for turn in &conv.turns {
                if let Some(v) = &turn.value {
                    words.extend(normalize_words(v));
                }
                if let Some(actions) = &turn.actions {
                    for call in actions {
                        words.insert(call.api_name.clone());
                        for (k, v) in &call.api_params {
                            words.extend(normalize_words(k));
                            words.extend(normalize_words(v));
                        }
                    }
                }
            }
        }
        let mut tokens: Vec<String> = STRUCTURAL.iter().map(|s| s.to_string()).collect();
        let mut names: Vec<String> = registry.iter().map(|t| t.name.clone()).collect();
        names.sort();
        for name in names {
            words.remove(&name);
            tokens.push(name);
        }
        for w in words {
            if !STRUCTURAL.contains(&w.as_str()) {
                tokens.push(w);
            }
        }
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn eos(&self) -> usize {
        self.id(EOS).expect("structural tokens always present")
    }

    pub fn unk(&self) -> usize {
        self.id(UNK).expect("structural tokens always present")
    }

    /// Encodes words strictly: an unknown word is a data error. Used on
    /// training data, where the vocabulary was built from the same corpus.
    pub fn encode_strict(&self, words: &[String]) -> Result<Vec<usize>, ModelError> {
        words
            .iter()
            .map(|w| {
                self.id(w).ok_or_else(|| ModelError::VocabMiss {
                    word: w.clone(),
                })
            })
            .collect()
    }

    /// Encodes words leniently: unknown words map to `<unk>`. Used at
    /// inference on text the model never saw.
    pub fn encode_lenient(&self, words: &[String]) -> Vec<usize> {
        let unk = self.unk();
        words.iter().map(|w| self.id(w).unwrap_or(unk)).collect()
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.tokens.join("\n") + "\n")
    }

    pub fn load(path: &Path) -> std::io::Result<Vocab> {
        let text = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocab { tokens, index })
    }
}

fn encode_call_stream(calls: &[ToolCall], out: &mut Vec<String>) {
    out.push(ACT_OPEN.to_string());
    for call in calls {
        out.push(call.api_name.clone());
        for (k, v) in &call.api_params {
            out.push(PARAM_MARK.to_string());
            out.extend(normalize_words(k));
            out.extend(normalize_words(v));
        }
    }
    out.push(ACT_CLOSE.to_string());
}

/// Token stream a model is trained to emit for one conversation: the opening
/// assistant turn's calls and answer, optionally the wrap-up turn behind a
/// round separator, closed by `<eos>`.
pub fn target_words(conv: &Conversation, include_round_two: bool) -> Result<Vec<String>, ModelError> {
    let first = conv.turns.get(1).ok_or(ModelError::MissingTurn { index: 1 })?;
    let mut out = Vec::new();
    encode_call_stream(first.actions.as_deref().unwrap_or(&[]), &mut out);
    if let Some(v) = &first.value {
        out.extend(normalize_words(v));
    }
    if include_round_two {
        if let Some(second) = conv.turns.get(3) {
            out.push(ROUND_SEP.to_string());
            encode_call_stream(second.actions.as_deref().unwrap_or(&[]), &mut out);
            if let Some(v) = &second.value {
                out.extend(normalize_words(v));
            }
        }
    }
    out.push(EOS.to_string());
    Ok(out)
}

/// Instruction word stream (the opening human turn).
pub fn instruction_words(conv: &Conversation) -> Result<Vec<String>, ModelError> {
    let turn = conv.turns.first().ok_or(ModelError::MissingTurn { index: 0 })?;
    let words = turn
        .value
        .as_deref()
        .map(normalize_words)
        .unwrap_or_default();
    if words.is_empty() {
        return Err(ModelError::EmptyInstruction);
    }
    Ok(words)
}

/// Recovers tool calls from a generated token stream: the tokens between the
/// first `<act>` and its closing `</act>`. A known tool name opens a call;
/// `<p> key value` triples attach params to the open call. Anything else in
/// the block is ignored (a model may babble; scoring stays well-defined).
pub fn parse_predicted_calls(
    tokens: &[usize],
    vocab: &Vocab,
    tool_names: &BTreeSet<String>,
) -> Vec<ToolCall> {
    let mut calls: Vec<ToolCall> = Vec::new();
    let mut inside = false;
    let mut i = 0;
    while i < tokens.len() {
        let tok = match vocab.token(tokens[i]) {
            Some(t) => t,
            None => break,
        };
        match tok {
            ACT_OPEN if !inside => inside = true,
            ACT_CLOSE if inside => break,
            PARAM_MARK if inside => {
                let key = tokens.get(i + 1).and_then(|&t| vocab.token(t));
                let value = tokens.get(i + 2).and_then(|&t| vocab.token(t));
                if let (Some(call), Some(k), Some(v)) = (calls.last_mut(), key, value) {
                    call.api_params.insert(k.to_string(), v.to_string());
                }
                i += 2;
            }
            name if inside && tool_names.contains(name) => {
                calls.push(ToolCall::new(name));
            }
            _ => {}
        }
        i += 1;
    }
    calls
}
