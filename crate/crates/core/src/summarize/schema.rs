//! Structured summary records and lenient parsing of backend replies.

use serde::{Deserialize, Serialize};

use crate::graph::{CodeNode, NodeKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedDescription {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub name: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredSummary {
    pub node_id: String,
    pub name: String,
    pub kind: NodeKind,
    /// One sentence.
    pub purpose: String,
    pub details: String,
    pub inputs: Vec<NamedDescription>,
    pub outputs: String,
    pub side_effects: String,
    pub dependencies: Vec<Dependency>,
    pub raw_backend_output: String,
}

impl StructuredSummary {
    /// First sentence of `details`, or all of it when there is no terminator.
    pub fn details_first_sentence(&self) -> &str {
        first_sentence(&self.details)
    }

    /// Fallback summary built from unparseable output: first non-blank line as
    /// the purpose, the whole output as details.
    pub fn degraded(node: &CodeNode, raw: &str) -> Self {
        let purpose = raw
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_string)
            .unwrap_or_else(|| format!("Function {} in {}", node.name, node.file_path));
        StructuredSummary {
            node_id: node.id.clone(),
            name: node.name.clone(),
            kind: node.kind,
            purpose,
            details: raw.trim().to_string(),
            inputs: Vec::new(),
            outputs: String::new(),
            side_effects: "none".to_string(),
            dependencies: Vec::new(),
            raw_backend_output: raw.to_string(),
        }
    }
}

pub(crate) fn first_sentence(text: &str) -> &str {
    let text = text.trim();
    let bytes = text.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_none_or(|c| c.is_ascii_whitespace()) {
            return &text[..=i];
        }
        if b == b'\n' {
            return text[..i].trim_end();
        }
    }
    text
}

/// The JSON object a backend is asked to produce.
#[derive(Debug, Deserialize)]
struct SummaryReply {
    purpose: String,
    #[serde(default)]
    details: String,
    #[serde(default)]
    inputs: Vec<ReplyInput>,
    #[serde(default)]
    outputs: serde_json::Value,
    #[serde(default)]
    side_effects: serde_json::Value,
    #[serde(default)]
    dependencies: Vec<ReplyDependency>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ReplyInput {
    Named {
        name: String,
        #[serde(default)]
        description: String,
    },
    Bare(String),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ReplyDependency {
    Named {
        name: String,
        #[serde(default)]
        role: String,
    },
    Bare(String),
}

fn value_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::Null => String::new(),
        serde_json::Value::String(s) => s.trim().to_string(),
        other => other.to_string(),
    }
}

/// Locates the JSON object inside a reply: a fenced block if present,
/// otherwise the outermost `{ ... }` span.
pub(crate) fn extract_json_object(raw: &str) -> Option<&str> {
    if let Some(start) = raw.find("```") {
        let after = &raw[start + 3..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
        let body = &after[body_start..];
        if let Some(end) = body.find("```") {
            let inner = body[..end].trim();
            if inner.starts_with('{') {
                return Some(inner);
            }
        }
    }
    let open = raw.find('{')?;
    let close = raw.rfind('}')?;
    (close > open).then(|| &raw[open..=close])
}

/// Parses a backend reply for `node`. Returns the summary plus any schema
/// warnings, or `None` when the reply has no usable JSON object.
pub(crate) fn parse_reply(node: &CodeNode, raw: &str) -> Option<(StructuredSummary, Vec<String>)> {
    let json = extract_json_object(raw)?;
    let reply: SummaryReply = serde_json::from_str(json).ok()?;
    let purpose = reply.purpose.trim().to_string();
    if purpose.is_empty() {
        return None;
    }
    let mut warnings = Vec::new();
    let dependencies = reply
        .dependencies
        .into_iter()
        .map(|d| match d {
            ReplyDependency::Named { name, role } => Dependency {
                name: name.trim().to_string(),
                role: role.trim().to_string(),
            },
            ReplyDependency::Bare(name) => Dependency {
                name: name.trim().to_string(),
                role: String::new(),
            },
        })
        .filter(|d| {
            let keep = !d.name.is_empty();
            if !keep {
                warnings.push("dropped dependency entry with an empty name".to_string());
            }
            keep
        })
        .collect();
    let inputs = reply
        .inputs
        .into_iter()
        .map(|i| match i {
            ReplyInput::Named { name, description } => NamedDescription { name, description },
            ReplyInput::Bare(name) => NamedDescription {
                name,
                description: String::new(),
            },
        })
        .collect();
    let side_effects = match value_text(&reply.side_effects) {
        s if s.is_empty() => "none".to_string(),
        s => s,
    };
    Some((
        StructuredSummary {
            node_id: node.id.clone(),
            name: node.name.clone(),
            kind: node.kind,
            purpose,
            details: reply.details.trim().to_string(),
            inputs,
            outputs: value_text(&reply.outputs),
            side_effects,
            dependencies,
            raw_backend_output: raw.to_string(),
        },
        warnings,
    ))
}
