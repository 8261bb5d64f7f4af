//! Prompt templates.
//!
//! A template is UTF-8 text with the placeholders `{function_name}`,
//! `{function_code}`, `{child_context}` and `{schema_instructions}`, each
//! exactly once. `{file_path}` may appear at most once. Any other braces are
//! literal text. Substituted values are never re-scanned.

use std::fmt::Write as _;

use thiserror::Error;

use super::schema::StructuredSummary;
use crate::graph::CodeNode;

pub const NO_CHILD_CONTEXT: &str = "No called-function context available.";
pub const CYCLE_PLACEHOLDER: &str = "[cycle: summary unavailable]";

pub const CODE_OPEN: &str = "<<<CODE";
pub const CODE_CLOSE: &str = "CODE>>>";
pub const CONTEXT_OPEN: &str = "<<<CONTEXT";
pub const CONTEXT_CLOSE: &str = "CONTEXT>>>";

pub const SCHEMA_INSTRUCTIONS: &str = r#"Respond with a single fenced ```json block containing one object with these keys:
  "purpose": one sentence stating what the function is for,
  "details": a short paragraph on how it works,
  "inputs": a list of {"name", "description"} objects, one per parameter,
  "outputs": what it returns,
  "side_effects": observable effects beyond the return value, or "none",
  "dependencies": a list of {"name", "role"} objects for the functions it calls, with a one-line role each.
Use the called-function context to describe dependencies accurately. Do not add keys."#;

pub const DEFAULT_TEMPLATE: &str = "You are documenting one function of a larger codebase. \
Read its source and the summaries of the functions it calls, then write a structured summary.

Function: {function_name}
File: {file_path}

Source:
<<<CODE
{function_code}
CODE>>>

Summaries of called functions:
<<<CONTEXT
{child_context}
CONTEXT>>>

{schema_instructions}
";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("placeholder {{{0}}} is missing from the template")]
    Missing(&'static str),
    #[error("placeholder {{{0}}} appears {1} times; it must appear once")]
    Repeated(&'static str, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    FunctionName,
    FunctionCode,
    ChildContext,
    SchemaInstructions,
    FilePath,
}

const SLOTS: [(&str, Slot, bool); 5] = [
    ("function_name", Slot::FunctionName, true),
    ("function_code", Slot::FunctionCode, true),
    ("child_context", Slot::ChildContext, true),
    ("schema_instructions", Slot::SchemaInstructions, true),
    ("file_path", Slot::FilePath, false),
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(Slot),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut counts = [0usize; SLOTS.len()];
        let mut literal = String::new();
        let mut rest = text;
        while let Some(open) = rest.find('{') {
            literal.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            let hit = SLOTS.iter().enumerate().find(|(_, (name, _, _))| {
                after.starts_with(name) && after[name.len()..].starts_with('}')
            });
            match hit {
                Some((i, (name, slot, _))) => {
                    if !literal.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(*slot));
                    counts[i] += 1;
                    rest = &after[name.len() + 1..];
                }
                None => {
                    literal.push('{');
                    rest = after;
                }
            }
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Text(literal));
        }
        for (i, (name, _, required)) in SLOTS.iter().enumerate() {
            match counts[i] {
                0 if *required => return Err(TemplateError::Missing(name)),
                0 | 1 => {}
                n => return Err(TemplateError::Repeated(name, n)),
            }
        }
        Ok(Self { segments })
    }

    fn render_with(&self, node: &CodeNode, child_context: &str) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(Slot::FunctionName) => out.push_str(&node.name),
                Segment::Slot(Slot::FunctionCode) => out.push_str(&node.code),
                Segment::Slot(Slot::ChildContext) => out.push_str(child_context),
                Segment::Slot(Slot::SchemaInstructions) => out.push_str(SCHEMA_INSTRUCTIONS),
                Segment::Slot(Slot::FilePath) => out.push_str(&node.file_path),
            }
        }
        out
    }
}

/// One entry of the called-function context.
#[derive(Debug, Clone, Copy)]
pub enum ChildEntry<'a> {
    Summary(&'a StructuredSummary),
    /// Callee whose summary is not available because its edge was broken to
    /// resolve a cycle.
    CycleGap { name: &'a str },
}

impl ChildEntry<'_> {
    pub fn line(&self) -> String {
        match self {
            ChildEntry::Summary(s) => format!("- {}: {} | {}", s.name, s.purpose, s.details_first_sentence()),
            ChildEntry::CycleGap { name } => format!("- {name}: {CYCLE_PLACEHOLDER}"),
        }
    }
}

/// Header of a child line, `- <name>: <purpose>`, used to check that a
/// summary reached its caller's prompt.
pub fn child_header(summary: &StructuredSummary) -> String {
    format!("- {}: {}", summary.name, summary.purpose)
}

pub fn child_context(entries: &[ChildEntry<'_>]) -> String {
    if entries.is_empty() {
        return NO_CHILD_CONTEXT.to_string();
    }
    let mut s = String::new();
    for (i, e) in entries.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = write!(s, "{}", e.line());
    }
    s
}

/// Renders the prompt for `node`. `child_summaries` must already be in
/// callee-id order.
pub fn render_prompt(template: &PromptTemplate, node: &CodeNode, child_summaries: &[&StructuredSummary]) -> String {
    let entries: Vec<ChildEntry<'_>> = child_summaries.iter().map(|s| ChildEntry::Summary(s)).collect();
    render_entries(template, node, &entries)
}

pub(crate) fn render_entries(template: &PromptTemplate, node: &CodeNode, entries: &[ChildEntry<'_>]) -> String {
    template.render_with(node, &child_context(entries))
}

pub const FUNCTIONS_OPEN: &str = "<<<FUNCTIONS";
pub const FUNCTIONS_CLOSE: &str = "FUNCTIONS>>>";
pub const SUMMARY_OPEN: &str = "<<<SUMMARY";
pub const SUMMARY_CLOSE: &str = "SUMMARY>>>";
pub const CONDENSED_OPEN: &str = "<<<CONDENSED";
pub const CONDENSED_CLOSE: &str = "CONDENSED>>>";
pub const DETAILS_OPEN: &str = "<<<DETAILS";
pub const DETAILS_CLOSE: &str = "DETAILS>>>";

/// Module-level prompt over `(name, details)` pairs of the file's functions.
pub fn module_prompt(file_path: &str, functions: &[(&str, &str)]) -> String {
    let mut listing = String::new();
    for (name, details) in functions {
        let _ = writeln!(listing, "- {name}: {}", details.replace('\n', " "));
    }
    format!(
        "Write a one-paragraph overview of a source module from the summaries of the functions it defines.\n\n\
         Module: {file_path}\n\n{FUNCTIONS_OPEN}\n{listing}{FUNCTIONS_CLOSE}\n\n\
         Reply with the paragraph only."
    )
}

/// First stage of query generation: shorten a structured summary.
pub fn condense_prompt(summary: &StructuredSummary) -> String {
    let body = serde_json::json!({
        "name": summary.name,
        "purpose": summary.purpose,
        "details": summary.details,
        "dependencies": summary.dependencies.iter().map(|d| &d.name).collect::<Vec<_>>(),
    });
    format!(
        "Condense this function summary into one or two sentences while preserving critical technical details.\n\n\
         {SUMMARY_OPEN}\n{body}\n{SUMMARY_CLOSE}\n\nReply with the condensed text only."
    )
}

/// Second stage of query generation: developer-style search queries.
pub fn query_prompt(condensed: &str, details: &str, count: usize) -> String {
    format!(
        "Write {count} search queries a developer might type to find this function. \
         Focus on the function's purpose and behavior. Each query must be at most 10 words. \
         Put one query per line with no numbering.\n\nCount: {count}\n\n\
         {CONDENSED_OPEN}\n{condensed}\n{CONDENSED_CLOSE}\n\n{DETAILS_OPEN}\n{details}\n{DETAILS_CLOSE}\n"
    )
}

/// Text between `open\n` and `\nclose`, if both markers are present.
pub(crate) fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let body = text[start..].strip_prefix('\n').unwrap_or(&text[start..]);
    let end = body.find(close)?;
    Some(body[..end].strip_suffix('\n').unwrap_or(&body[..end]))
}
