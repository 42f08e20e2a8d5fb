//! Strict record parsing and corpus file IO.
//!
//! The parser enforces what must hold for a record to be usable at all:
//! valid JSON, an object with a `conversations` array of exactly four turn
//! objects, recognized roles, correct field types, and no assistant
//! annotations on human turns. Softer schema rules (missing `thoughts`,
//! unknown tools, empty values, role order) are the validator's job so they
//! can be *reported* instead of aborting a load.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{Map, Value};

use super::schema::{Conversation, Role, ToolCall, Turn};
use super::DatasetError;

/// Number of turns every canonical record carries (two rounds).
pub const TURNS_PER_RECORD: usize = 4;

fn expect_string(
    v: &Value,
    field: &'static str,
    turn: Option<usize>,
) -> Result<String, DatasetError> {
    v.as_str()
        .map(str::to_string)
        .ok_or(DatasetError::WrongType {
            field,
            turn,
            expected: "string",
        })
}

fn parse_call(v: &Value, turn: usize) -> Result<ToolCall, DatasetError> {
    let obj = v.as_object().ok_or(DatasetError::WrongType {
        field: "actions",
        turn: Some(turn),
        expected: "object",
    })?;
    let name = obj
        .get("API_name")
        .ok_or(DatasetError::MissingField {
            field: "API_name",
            turn: Some(turn),
        })
        .and_then(|n| expect_string(n, "API_name", Some(turn)))?;
    let params = obj.get("API_params").ok_or(DatasetError::MissingField {
        field: "API_params",
        turn: Some(turn),
    })?;
    let params = params.as_object().ok_or(DatasetError::WrongType {
        field: "API_params",
        turn: Some(turn),
        expected: "object",
    })?;
    let mut call = ToolCall::new(name);
    for (k, v) in params {
        call.api_params
            .insert(k.clone(), expect_string(v, "API_params", Some(turn))?);
    }
    for k in obj.keys() {
        if k != "API_name" && k != "API_params" {
            return Err(DatasetError::UnexpectedField {
                field: k.clone(),
                turn: Some(turn),
            });
        }
    }
    Ok(call)
}

fn parse_turn(v: &Value, index: usize) -> Result<Turn, DatasetError> {
    let obj = v.as_object().ok_or(DatasetError::WrongType {
        field: "conversations",
        turn: Some(index),
        expected: "object",
    })?;
    let from = obj
        .get("from")
        .ok_or(DatasetError::MissingField {
            field: "from",
            turn: Some(index),
        })
        .and_then(|f| expect_string(f, "from", Some(index)))?;
    let from = Role::parse(&from).ok_or(DatasetError::BadRole {
        turn: index,
        got: from,
    })?;

    let thought = obj
        .get("thoughts")
        .map(|t| expect_string(t, "thoughts", Some(index)))
        .transpose()?;
    let actions = obj
        .get("actions")
        .map(|a| {
            a.as_array()
                .ok_or(DatasetError::WrongType {
                    field: "actions",
                    turn: Some(index),
                    expected: "array",
                })?
                .iter()
                .map(|c| parse_call(c, index))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let value = obj
        .get("value")
        .map(|v| expect_string(v, "value", Some(index)))
        .transpose()?;

    if from == Role::Human {
        if thought.is_some() {
            return Err(DatasetError::UnexpectedField {
                field: "thoughts".into(),
                turn: Some(index),
            });
        }
        if actions.is_some() {
            return Err(DatasetError::UnexpectedField {
                field: "actions".into(),
                turn: Some(index),
            });
        }
    }

    let mut extra = std::collections::BTreeMap::new();
    for (k, v) in obj {
        if !matches!(k.as_str(), "from" | "thoughts" | "actions" | "value") {
            extra.insert(k.clone(), v.clone());
        }
    }

    Ok(Turn {
        from,
        thought,
        actions,
        value,
        extra,
    })
}

fn parse_record_object(obj: &Map<String, Value>) -> Result<Conversation, DatasetError> {
    let turns_value = obj.get("conversations").ok_or(DatasetError::MissingField {
        field: "conversations",
        turn: None,
    })?;
    let turns_array = turns_value.as_array().ok_or(DatasetError::WrongType {
        field: "conversations",
        turn: None,
        expected: "array",
    })?;
    if turns_array.len() != TURNS_PER_RECORD {
        return Err(DatasetError::WrongTurnCount {
            got: turns_array.len(),
        });
    }
    let turns = turns_array
        .iter()
        .enumerate()
        .map(|(i, t)| parse_turn(t, i))
        .collect::<Result<Vec<_>, _>>()?;
    let mut extra = std::collections::BTreeMap::new();
    for (k, v) in obj {
        if k != "conversations" {
            extra.insert(k.clone(), v.clone());
        }
    }
    Ok(Conversation { turns, extra })
}

/// Parses one serialized record.
pub fn parse_conversation(line: &str) -> Result<Conversation, DatasetError> {
    let value: Value = serde_json::from_str(line).map_err(|e| DatasetError::Json {
        // Column is 1-based; for single-line records it doubles as a byte
        // offset into the line for ASCII content.
        offset: e.column().saturating_sub(1),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or(DatasetError::NotAnObject)?;
    parse_record_object(obj)
}

/// Reads a newline-delimited corpus file; errors carry the 1-based line number.
pub fn read_corpus(path: &Path) -> Result<Vec<Conversation>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            parse_conversation(&line).map_err(|source| DatasetError::AtLine {
                line: i + 1,
                source: Box::new(source),
            })?,
        );
    }
    Ok(out)
}

/// Writes records in canonical form, one per line.
pub fn write_corpus(path: &Path, records: &[Conversation]) -> Result<(), DatasetError> {
    let mut file = std::fs::File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    for record in records {
        writeln!(file, "{}", record.to_canonical_string()).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}
