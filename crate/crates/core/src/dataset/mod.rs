//! Conversation corpus tooling: schema, parsing, validation, reformatting,
//! synthesis, splitting and the rewrite protocol.

mod parse;
mod reformat;
mod registry;
mod rewrite;
mod schema;
mod split;
mod synth;
mod validate;

pub use parse::{parse_conversation, read_corpus, write_corpus, TURNS_PER_RECORD};
pub use reformat::{
    reformat_plain_instruction, NO_TOOL_RELAY, NO_TOOL_THOUGHT, NO_TOOL_WRAPUP_THOUGHT,
    NO_TOOL_WRAPUP_VALUE,
};
pub use registry::{builtin_registry, check_registry, load_registry, save_registry, ToolSpec};
pub use rewrite::{
    llm_rewrite, FixtureTransport, MockRewrite, RewriteRequest, RewriteResponse, RewriteTransport,
    TransportError, REWRITE_SYSTEM_PROMPT,
};
pub use schema::{Conversation, Role, ToolCall, Turn};
pub use split::{split_train_test, TRAIN_FRACTION};
pub use synth::{
    synthesize_corpus, synthesize_corpus_with, synthesize_general, SynthOptions, SynthSample,
    GENERAL_LABEL,
};
pub use validate::{validate, ValidationReport, Violation, ViolationCode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid json at byte {offset}: {message}")]
    Json { offset: usize, message: String },
    #[error("record is not a json object")]
    NotAnObject,
    #[error("missing required field '{field}'{}", turn.map(|t| format!(" at turn {t}")).unwrap_or_default())]
    MissingField {
        field: &'static str,
        turn: Option<usize>,
    },
    #[error("field '{field}'{} must be {expected}", turn.map(|t| format!(" at turn {t}")).unwrap_or_default())]
    WrongType {
        field: &'static str,
        turn: Option<usize>,
        expected: &'static str,
    },
    #[error("expected 4 turns, found {got}")]
    WrongTurnCount { got: usize },
    #[error("unrecognized role '{got}' at turn {turn}")]
    BadRole { turn: usize, got: String },
    #[error("unexpected field '{field}'{}", turn.map(|t| format!(" at turn {t}")).unwrap_or_default())]
    UnexpectedField { field: String, turn: Option<usize> },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        source: Box<DatasetError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("duplicate tool name '{name}' in registry")]
    DuplicateTool { name: String },
    #[error("composite '{tool}' references unknown member '{member}'")]
    UnknownCompositeMember { tool: String, member: String },
    #[error("stratum '{tool}' has {count} sample(s); need at least 2 to split")]
    InsufficientStratum { tool: String, count: usize },
    #[error("rewrite requires a configured client; running offline")]
    RewriteUnavailable,
    #[error("rewrite service failed after {attempts} attempt(s): {message}")]
    RewriteService { attempts: u32, message: String },
    #[error("rewrite violated protocol: {what}")]
    RewriteViolation { what: String },
}
