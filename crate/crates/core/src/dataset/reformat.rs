//! Reformatting plain instruction pairs into the four-turn schema.
//!
//! General question/answer data carries no tool calls, but the trainer
//! consumes one record shape only. A reformatted record answers in round one
//! with an empty action list and the canonical no-tool thought, and fills
//! round two with a fixed acknowledgment pair.

use super::schema::{Conversation, Turn};

/// Canonical thought for answers that need no tool. Byte-exact: downstream
/// filtering matches on this string.
pub const NO_TOOL_THOUGHT: &str = "The questions can be answered by the information in the context, without need any external tools.";

/// Fixed round-two human relay used when there is no tool output to relay.
pub const NO_TOOL_RELAY: &str = "No tool output to report.";

/// Fixed round-two assistant thought/value for reformatted records.
pub const NO_TOOL_WRAPUP_THOUGHT: &str =
    "The answer above already covers the request; no further work is needed.";
pub const NO_TOOL_WRAPUP_VALUE: &str = "Glad to help. Let me know if there is anything else.";

/// Wraps a plain (question, answer) pair into a canonical four-turn record.
pub fn reformat_plain_instruction(question: &str, answer: &str) -> Conversation {
    Conversation::new(vec![
        Turn::human(question),
        Turn::gpt(NO_TOOL_THOUGHT, vec![], answer),
        Turn::human(NO_TOOL_RELAY),
        Turn::gpt(NO_TOOL_WRAPUP_THOUGHT, vec![], NO_TOOL_WRAPUP_VALUE),
    ])
}
