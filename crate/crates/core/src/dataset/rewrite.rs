//! Rewrite protocol: growing a corpus by paraphrasing records through a
//! language-model service.
//!
//! The transport is pluggable — tests use the built-in mock (deterministic
//! synonym substitution) or a fixture transport replaying canned responses;
//! a deployment can implement [`RewriteTransport`] over any wire. Whatever
//! the transport returns is re-parsed and checked: the role sequence and the
//! action lists must be untouched, only `value` and `thoughts` may change.

use std::collections::VecDeque;

use super::parse::parse_conversation;
use super::schema::Conversation;
use super::DatasetError;

/// Instruction sent with every record. Rewrites must keep the structure and
/// the tool calls intact, rephrasing only the natural-language fields.
pub const REWRITE_SYSTEM_PROMPT: &str = "You are an AI assistant and you receive a set of conversations in json string format, the content of which is used as data for instruction finetune. Your task is to rephrase the dialogue to generate a new example. Note to give it in standard json format. DO NOT modify the 'from' and 'actions' parts. Only modify the 'value' and 'thoughts' part.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteRequest {
    pub system_prompt: String,
    /// Canonical serialization of the record to paraphrase.
    pub record: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteResponse {
    pub record: String,
}

/// Transport-level failure (timeouts, refusals, wire errors). Retried up to
/// the caller's budget before surfacing as a service error.
#[derive(Debug, Clone, thiserror::Error)]
#[error("rewrite transport failure: {message}")]
pub struct TransportError {
    pub message: String,
}

pub trait RewriteTransport {
    fn send(&mut self, request: &RewriteRequest) -> Result<RewriteResponse, TransportError>;
}

/// Sends `conv` through the rewrite protocol and re-checks the response.
///
/// `client` is `None` in offline runs, which makes the operation unavailable
/// rather than silently returning the input. Transport failures are retried
/// up to `max_retries` additional attempts.
pub fn llm_rewrite(
    conv: &Conversation,
    client: Option<&mut dyn RewriteTransport>,
    max_retries: u32,
) -> Result<Conversation, DatasetError> {
    let client = client.ok_or(DatasetError::RewriteUnavailable)?;
    let request = RewriteRequest {
        system_prompt: REWRITE_SYSTEM_PROMPT.to_string(),
        record: conv.to_canonical_string(),
    };
    let mut attempts = 0;
    let response = loop {
        attempts += 1;
        match client.send(&request) {
            Ok(r) => break r,
            Err(_) if attempts <= max_retries => continue,
            Err(source) => {
                return Err(DatasetError::RewriteService {
                    attempts,
                    message: source.message,
                })
            }
        }
    };
    let rewritten = parse_conversation(&response.record)?;
    check_rewrite(conv, &rewritten)?;
    Ok(rewritten)
}

/// The invariant the protocol promises: same roles, same actions.
fn check_rewrite(original: &Conversation, rewritten: &Conversation) -> Result<(), DatasetError> {
    if original.turns.len() != rewritten.turns.len() {
        return Err(DatasetError::RewriteViolation {
            what: format!(
                "turn count changed from {} to {}",
                original.turns.len(),
                rewritten.turns.len()
            ),
        });
    }
    for (i, (a, b)) in original.turns.iter().zip(&rewritten.turns).enumerate() {
        if a.from != b.from {
            return Err(DatasetError::RewriteViolation {
                what: format!("role changed at turn {i}"),
            });
        }
        if a.actions != b.actions {
            return Err(DatasetError::RewriteViolation {
                what: format!("actions changed at turn {i}"),
            });
        }
    }
    Ok(())
}

/// Built-in mock: deterministic synonym substitution on the free-text fields.
#[derive(Debug, Default)]
pub struct MockRewrite;

const SYNONYMS: [(&str, &str); 8] = [
    ("video", "clip"),
    ("Please", "Kindly"),
    ("Sure thing!", "Of course!"),
    ("results", "findings"),
    ("objects", "items"),
    ("ready", "prepared"),
    ("request", "task"),
    ("finished", "wrapped up"),
];

fn substitute(text: &str) -> String {
    let mut out = text.to_string();
    for (from, to) in SYNONYMS {
        out = out.replace(from, to);
    }
    out
}

impl RewriteTransport for MockRewrite {
    fn send(&mut self, request: &RewriteRequest) -> Result<RewriteResponse, TransportError> {
        let mut conv = parse_conversation(&request.record).map_err(|e| TransportError {
            message: format!("mock received unparseable record: {e}"),
        })?;
        for turn in &mut conv.turns {
            if let Some(v) = &turn.value {
                turn.value = Some(substitute(v));
            }
            if let Some(t) = &turn.thought {
                turn.thought = Some(substitute(t));
            }
        }
        Ok(RewriteResponse {
            record: conv.to_canonical_string(),
        })
    }
}

/// Replays canned responses in order; `Err` entries simulate wire failures.
#[derive(Debug, Default)]
pub struct FixtureTransport {
    pub responses: VecDeque<Result<String, TransportError>>,
}

impl FixtureTransport {
    pub fn new(responses: Vec<Result<String, TransportError>>) -> Self {
        FixtureTransport {
            responses: responses.into(),
        }
    }
}

impl RewriteTransport for FixtureTransport {
    fn send(&mut self, _request: &RewriteRequest) -> Result<RewriteResponse, TransportError> {
        match self.responses.pop_front() {
            Some(Ok(record)) => Ok(RewriteResponse { record }),
            Some(Err(e)) => Err(e),
            None => Err(TransportError {
                message: "fixture exhausted".into(),
            }),
        }
    }
}
