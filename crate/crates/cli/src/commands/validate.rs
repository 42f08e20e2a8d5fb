//! `toolstream validate` — audit a conversation corpus.
//!
//! Reads a JSONL corpus line by line and reports everything wrong with it:
//! lines that do not parse, and parseable records that violate the schema
//! (wrong round count, missing keys, unknown tools, broken role alternation,
//! empty values). Violations stream to stdout as one line each with the
//! record index and code; the exit code says whether the corpus is clean.

use std::path::{Path, PathBuf};

use toolstream_core::dataset::{builtin_registry, load_registry, parse_conversation, validate};

use crate::errors::{CliError, EXIT_DOMAIN, EXIT_OK};
use crate::job::{read_text, write_text};

pub fn run(
    corpus: &Path,
    registry: Option<&PathBuf>,
    report: Option<&PathBuf>,
) -> Result<i32, CliError> {
    let registry = match registry {
        Some(path) => load_registry(path)?,
        None => builtin_registry(),
    };
    let text = read_text(corpus)?;
    let mut lines = Vec::new();
    let mut records = 0usize;
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records += 1;
        match parse_conversation(line) {
            Err(e) => lines.push(format!("record {index}: PARSE: {e}")),
            Ok(conv) => {
                for v in validate(&conv, &registry).violations {
                    lines.push(format!("record {index}: {v}"));
                }
            }
        }
    }
    for line in &lines {
        println!("{line}");
    }
    println!(
        "checked {records} record(s): {} violation(s)",
        lines.len()
    );
    if let Some(path) = report {
        let mut body = lines.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        write_text(path, &body)?;
    }
    Ok(if lines.is_empty() { EXIT_OK } else { EXIT_DOMAIN })
}
