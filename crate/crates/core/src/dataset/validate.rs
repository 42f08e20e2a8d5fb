//! Schema validation: everything a structurally parseable record can still
//! get wrong, reported as data instead of errors so a whole corpus can be
//! audited in one pass.

use std::collections::BTreeSet;
use std::fmt;

use super::parse::TURNS_PER_RECORD;
use super::registry::ToolSpec;
use super::schema::{Conversation, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationCode {
    WrongRoundCount,
    MissingKey,
    UnknownTool,
    NonAlternatingRoles,
    EmptyValue,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::WrongRoundCount => "WRONG_ROUND_COUNT",
            ViolationCode::MissingKey => "MISSING_KEY",
            ViolationCode::UnknownTool => "UNKNOWN_TOOL",
            ViolationCode::NonAlternatingRoles => "NON_ALTERNATING_ROLES",
            ViolationCode::EmptyValue => "EMPTY_VALUE",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: ViolationCode,
    /// Turn the violation is anchored to, when one applies.
    pub turn: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.turn {
            Some(t) => write!(f, "{} turn {}: {}", self.code, t, self.detail),
            None => write!(f, "{}: {}", self.code, self.detail),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, code: ViolationCode) -> bool {
        self.violations.iter().any(|v| v.code == code)
    }
}

/// Validates one conversation against the schema rules and a tool registry.
pub fn validate(conv: &Conversation, registry: &[ToolSpec]) -> ValidationReport {
    let known: BTreeSet<&str> = registry.iter().map(|t| t.name.as_str()).collect();
    let mut violations = Vec::new();

    if conv.turns.len() != TURNS_PER_RECORD {
        violations.push(Violation {
            code: ViolationCode::WrongRoundCount,
            turn: None,
            detail: format!(
                "expected {} turns, found {}",
                TURNS_PER_RECORD,
                conv.turns.len()
            ),
        });
    }

    for (i, turn) in conv.turns.iter().enumerate() {
        let expected = if i % 2 == 0 { Role::Human } else { Role::Gpt };
        if turn.from != expected {
            violations.push(Violation {
                code: ViolationCode::NonAlternatingRoles,
                turn: Some(i),
                detail: format!(
                    "expected {}, found {}",
                    expected.as_str(),
                    turn.from.as_str()
                ),
            });
        }

        match &turn.value {
            None => violations.push(Violation {
                code: ViolationCode::MissingKey,
                turn: Some(i),
                detail: "value".into(),
            }),
            Some(v) if v.is_empty() => violations.push(Violation {
                code: ViolationCode::EmptyValue,
                turn: Some(i),
                detail: "value is empty".into(),
            }),
            Some(_) => {}
        }

        if turn.from == Role::Gpt {
            if turn.thought.is_none() {
                violations.push(Violation {
                    code: ViolationCode::MissingKey,
                    turn: Some(i),
                    detail: "thoughts".into(),
                });
            }
            match &turn.actions {
                None => violations.push(Violation {
                    code: ViolationCode::MissingKey,
                    turn: Some(i),
                    detail: "actions".into(),
                }),
                Some(calls) => {
                    for call in calls {
                        if !known.contains(call.api_name.as_str()) {
                            violations.push(Violation {
                                code: ViolationCode::UnknownTool,
                                turn: Some(i),
                                detail: call.api_name.clone(),
                            });
                        }
                    }
                }
            }
        }
    }

    ValidationReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::registry::builtin_registry;
    use crate::dataset::schema::{ToolCall, Turn};

    fn clean_record() -> Conversation {
        Conversation::new(vec![
            Turn::human("Please transcribe the speech."),
            Turn::gpt("Needs a transcript.", vec![ToolCall::new("asr")], "On it."),
            Turn::human("asr output: done."),
            Turn::gpt("Run finished.", vec![], "Here you go."),
        ])
    }

    #[test]
    fn clean_record_is_clean() {
        assert!(validate(&clean_record(), &builtin_registry()).is_clean());
    }

    #[test]
    fn dropped_turn_flags_round_count() {
        let mut conv = clean_record();
        conv.turns.pop();
        let report = validate(&conv, &builtin_registry());
        assert!(report.has(ViolationCode::WrongRoundCount));
    }

    #[test]
    fn missing_thought_flags_missing_key() {
        let mut conv = clean_record();
        conv.turns[1].thought = None;
        let report = validate(&conv, &builtin_registry());
        assert!(report.has(ViolationCode::MissingKey));
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].detail, "thoughts");
    }

    #[test]
    fn unknown_tool_is_named() {
        let mut conv = clean_record();
        conv.turns[1].actions = Some(vec![ToolCall::new("teleport")]);
        let report = validate(&conv, &builtin_registry());
        assert!(report.has(ViolationCode::UnknownTool));
        assert_eq!(report.violations[0].detail, "teleport");
    }

    #[test]
    fn swapped_roles_flag_alternation() {
        let mut conv = clean_record();
        conv.turns.swap(0, 1);
        // Swapping also moves the annotations onto an even slot; only the
        // role pattern is under test here.
        let report = validate(&conv, &builtin_registry());
        assert!(report.has(ViolationCode::NonAlternatingRoles));
    }

    #[test]
    fn empty_value_is_flagged() {
        let mut conv = clean_record();
        conv.turns[2].value = Some(String::new());
        let report = validate(&conv, &builtin_registry());
        assert!(report.has(ViolationCode::EmptyValue));
    }

    #[test]
    fn missing_value_is_missing_key_not_empty() {
        let mut conv = clean_record();
        conv.turns[0].value = None;
        let report = validate(&conv, &builtin_registry());
        assert!(report.has(ViolationCode::MissingKey));
        assert!(!report.has(ViolationCode::EmptyValue));
    }
}
