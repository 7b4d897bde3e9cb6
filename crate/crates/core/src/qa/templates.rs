//! Versioned question templates.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Deserialize;

pub const DEFAULT_TEMPLATES: &str = include_str!("templates.toml");

/// Keys every template file must provide, with the placeholders each may use.
const REQUIRED: &[(&str, &[&str])] = &[
    ("point_query.question", &["pixel"]),
    ("depth_order.question", &["p1", "p2"]),
    ("depth_order.statement", &["near", "far"]),
    ("orientation.question", &["a"]),
    ("orientation.statement", &["a", "label"]),
    ("size.question", &["a", "dim"]),
    ("size.statement", &["a", "dim", "value"]),
    ("location.question", &["a"]),
    ("camera_distance.question", &["a"]),
    ("camera_distance.statement", &["a", "value"]),
    ("direction_label.question", &["a", "b", "choices"]),
    ("direction_label.statement", &["a", "b", "relation"]),
    ("direction_vector.question", &["a", "b"]),
    ("distance.question", &["a", "b", "component"]),
    ("distance.statement", &["a", "b", "component", "value"]),
    ("extreme.question", &["list", "superlative"]),
    ("extreme.statement", &["list", "superlative", "x"]),
    ("order.question", &["list", "low", "high"]),
    ("consistency.question", &["a", "b"]),
    ("consistency.statement", &["a", "b", "label"]),
    ("perspective_label.question", &["viewpoint", "b", "choices"]),
    ("perspective_label.statement", &["viewpoint", "b", "relation"]),
    ("perspective_distance.question", &["viewpoint", "b", "relation"]),
    ("perspective_distance.statement", &["viewpoint", "b", "relation", "value"]),
    ("count.question", &["cats", "relation", "a"]),
    ("count.statement", &["cats", "relation", "a", "n"]),
    ("viewpoint.object", &["a"]),
    ("viewpoint.observer", &["a", "c"]),
];

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template file does not parse: {0}")]
    Parse(String),
    #[error("unsupported template version {0}")]
    Version(u32),
    #[error("missing template key {0:?}")]
    Missing(String),
    #[error("template key {0:?} has no paraphrases")]
    Empty(String),
    #[error("unknown template key {0:?}")]
    Unknown(String),
    #[error("template {key:?} uses unknown placeholder {{{name}}}")]
    Placeholder { key: String, name: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateFile {
    version: u32,
    templates: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    pub version: u32,
    entries: BTreeMap<String, Vec<String>>,
}

fn placeholders(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else { break };
        out.push(&rest[start + 1..start + len]);
        rest = &rest[start + len + 1..];
    }
    out
}

impl Templates {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = toml::from_str(text).map_err(|e| TemplateError::Parse(e.to_string()))?;
        if file.version != 1 {
            return Err(TemplateError::Version(file.version));
        }
        let required: BTreeMap<&str, BTreeSet<&str>> =
            REQUIRED.iter().map(|(k, names)| (*k, names.iter().copied().collect())).collect();
        for key in file.templates.keys() {
            if !required.contains_key(key.as_str()) {
                return Err(TemplateError::Unknown(key.clone()));
            }
        }
        for (key, allowed) in &required {
            let list = file.templates.get(*key).ok_or_else(|| TemplateError::Missing(key.to_string()))?;
            if list.is_empty() {
                return Err(TemplateError::Empty(key.to_string()));
            }
            for text in list {
                for name in placeholders(text) {
                    if !allowed.contains(name) {
                        return Err(TemplateError::Placeholder { key: key.to_string(), name: name.into() });
                    }
                }
            }
        }
        Ok(Templates { version: file.version, entries: file.templates })
    }

    pub fn builtin() -> Self {
        Templates::parse(DEFAULT_TEMPLATES).expect("built-in templates are valid")
    }

    /// Picks a paraphrase of `key` and fills in `values`. The first letter of the result
    /// is capitalized.
    pub fn render<R: Rng>(&self, key: &str, values: &[(&str, &str)], rng: &mut R) -> String {
        let list = &self.entries[key];
        let mut text = list[rng.random_range(0..list.len())].clone();
        for (name, value) in values {
            text = text.replace(&format!("{{{name}}}"), value);
        }
        capitalize(&text)
    }
}

pub(crate) fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
