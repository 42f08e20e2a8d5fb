//! Conversation schema and its canonical serialization.
//!
//! A record is one four-turn conversation: human request, assistant reply
//! (with `thoughts` + `actions` + `value`), human relay of the tool output,
//! assistant wrap-up. Serialization is canonical — fixed key order, compact
//! separators, params sorted — so equal conversations serialize to equal
//! bytes and corpus files diff cleanly.

use std::collections::BTreeMap;

use serde::ser::{Serialize, SerializeMap, Serializer};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Human,
    Gpt,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Human => "human",
            Role::Gpt => "gpt",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "human" => Some(Role::Human),
            "gpt" => Some(Role::Gpt),
            _ => None,
        }
    }
}

/// A single tool invocation. Serialized keys are `API_name` / `API_params`;
/// params are kept sorted so serialization is canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ToolCall {
    pub api_name: String,
    pub api_params: BTreeMap<String, String>,
}

impl ToolCall {
    pub fn new(api_name: impl Into<String>) -> Self {
        ToolCall {
            api_name: api_name.into(),
            api_params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.api_params.insert(key.into(), value.into());
        self
    }
}

impl Serialize for ToolCall {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("API_name", &self.api_name)?;
        map.serialize_entry("API_params", &self.api_params)?;
        map.end()
    }
}

/// One turn. The assistant annotation fields are optional at the type level:
/// the parser tolerates their absence so the validator can report it as a
/// violation rather than a hard failure. The in-memory name is `thought`; the
/// serialized key is `thoughts`.
#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub from: Role,
    pub thought: Option<String>,
    pub actions: Option<Vec<ToolCall>>,
    pub value: Option<String>,
    /// Unknown fields carried through verbatim so foreign records round-trip.
    pub extra: BTreeMap<String, Value>,
}

impl Turn {
    pub fn human(value: impl Into<String>) -> Self {
        Turn {
            from: Role::Human,
            thought: None,
            actions: None,
            value: Some(value.into()),
            extra: BTreeMap::new(),
        }
    }

    pub fn gpt(
        thought: impl Into<String>,
        actions: Vec<ToolCall>,
        value: impl Into<String>,
    ) -> Self {
        Turn {
            from: Role::Gpt,
            thought: Some(thought.into()),
            actions: Some(actions),
            value: Some(value.into()),
            extra: BTreeMap::new(),
        }
    }
}

impl Serialize for Turn {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("from", self.from.as_str())?;
        if let Some(t) = &self.thought {
            map.serialize_entry("thoughts", t)?;
        }
        if let Some(a) = &self.actions {
            map.serialize_entry("actions", a)?;
        }
        if let Some(v) = &self.value {
            map.serialize_entry("value", v)?;
        }
        for (k, v) in &self.extra {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// A full record: the turn list plus any unknown record-level fields.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Conversation {
    pub turns: Vec<Turn>,
    pub extra: BTreeMap<String, Value>,
}

impl Conversation {
    pub fn new(turns: Vec<Turn>) -> Self {
        Conversation {
            turns,
            extra: BTreeMap::new(),
        }
    }

    /// Canonical single-line serialization (the corpus file format).
    pub fn to_canonical_string(&self) -> String {
        serde_json::to_string(self).expect("conversation serialization cannot fail")
    }

    /// Sorted, de-duplicated tool names invoked by the opening assistant turn.
    /// This is the ground-truth label set scoring compares predictions against.
    pub fn tool_labels(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .turns
            .get(1)
            .and_then(|t| t.actions.as_ref())
            .map(|calls| calls.iter().map(|c| c.api_name.clone()).collect())
            .unwrap_or_default();
        names.sort();
        names.dedup();
        names
    }

    /// The opening assistant turn's calls, in emission order.
    pub fn reference_calls(&self) -> Vec<ToolCall> {
        self.turns
            .get(1)
            .and_then(|t| t.actions.clone())
            .unwrap_or_default()
    }

    /// The opening human instruction, if present.
    pub fn instruction(&self) -> Option<&str> {
        self.turns.first().and_then(|t| t.value.as_deref())
    }
}

impl Serialize for Conversation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("conversations", &self.turns)?;
        for (k, v) in &self.extra {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}
