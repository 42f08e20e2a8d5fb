//! Tool registry: the closed set of tools conversations may call.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// One callable tool. `composite_of` is empty for atomic tools; a composite
/// names the atomic members whose calls its conversations emit (in order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub display: String,
    #[serde(default)]
    pub param_schema: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub composite_of: Vec<String>,
}

impl ToolSpec {
    fn atomic(name: &str, display: &str) -> Self {
        ToolSpec {
            name: name.to_string(),
            display: display.to_string(),
            param_schema: BTreeMap::new(),
            composite_of: Vec::new(),
        }
    }

    pub fn is_composite(&self) -> bool {
        !self.composite_of.is_empty()
    }
}

/// The ten stock tools: eight atomic video tools plus two compositions.
pub fn builtin_registry() -> Vec<ToolSpec> {
    let mut ocr = ToolSpec::atomic("ocr", "Optical Character Recognition");
    ocr.param_schema
        .insert("granularity".into(), "text unit to return: word or line".into());
    let mut t2v = ToolSpec::atomic("text-to-video-generation", "Text To Video Generation");
    t2v.param_schema
        .insert("quality".into(), "render quality: draft or high".into());
    vec![
        ToolSpec::atomic("action-recognition", "Action Recognition"),
        ToolSpec::atomic("dense-video-caption", "Dense Video Caption"),
        ToolSpec::atomic("temporal-action-localization", "Temporal Action Localization"),
        ocr,
        ToolSpec::atomic("asr", "Automatic Speech Recognition"),
        ToolSpec::atomic("video-relation-detection", "Video Relation Detection"),
        ToolSpec::atomic("video-object-segmentation", "Video Object Segmentation"),
        t2v,
        ToolSpec {
            name: "action-recognition+asr".into(),
            display: "Action Recognition + Speech Recognition".into(),
            param_schema: BTreeMap::new(),
            composite_of: vec!["action-recognition".into(), "asr".into()],
        },
        ToolSpec {
            name: "action-recognition+video-object-segmentation".into(),
            display: "Action Recognition + Object Segmentation".into(),
            param_schema: BTreeMap::new(),
            composite_of: vec![
                "action-recognition".into(),
                "video-object-segmentation".into(),
            ],
        },
    ]
}

/// Checks registry consistency: unique names, and composites that reference
/// existing atomic members.
pub fn check_registry(tools: &[ToolSpec]) -> Result<(), DatasetError> {
    let mut seen = BTreeSet::new();
    for t in tools {
        if !seen.insert(t.name.as_str()) {
            return Err(DatasetError::DuplicateTool {
                name: t.name.clone(),
            });
        }
    }
    for t in tools {
        for member in &t.composite_of {
            let found = tools
                .iter()
                .find(|m| &m.name == member)
                .ok_or_else(|| DatasetError::UnknownCompositeMember {
                    tool: t.name.clone(),
                    member: member.clone(),
                })?;
            if found.is_composite() {
                return Err(DatasetError::UnknownCompositeMember {
                    tool: t.name.clone(),
                    member: format!("{member} (composites cannot nest)"),
                });
            }
        }
    }
    Ok(())
}

pub fn load_registry(path: &Path) -> Result<Vec<ToolSpec>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let tools: Vec<ToolSpec> = serde_json::from_str(&text).map_err(|e| DatasetError::Json {
        offset: e.column(),
        message: e.to_string(),
    })?;
    check_registry(&tools)?;
    Ok(tools)
}

pub fn save_registry(path: &Path, tools: &[ToolSpec]) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(tools).expect("registry serialization cannot fail");
    std::fs::write(path, text).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}
