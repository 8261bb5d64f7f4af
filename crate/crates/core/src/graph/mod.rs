//! Function-level code graph.
//!
//! Nodes are code elements (functions, methods, classes, files) and edges are
//! typed relationships between them. Only `call` edges drive leveling; import
//! and inheritance edges are kept for context expansion at query time.

mod json;
mod levels;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use json::{graph_to_json, json_to_graph};
pub use levels::{all_deps_processed, break_cycle, build_levels, LevelPlan};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {from} -> {to} references a node that is not in the graph")]
    DanglingEdge { from: String, to: String },
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("invalid node `{id}`: {reason}")]
    InvalidNode { id: String, reason: String },
    #[error("graph json parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Function,
    Method,
    Class,
    Module,
    File,
}

impl NodeKind {
    /// Functions and methods are the units that get summarized and embedded.
    pub fn is_callable(self) -> bool {
        matches!(self, NodeKind::Function | NodeKind::Method)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Function => "function",
            NodeKind::Method => "method",
            NodeKind::Class => "class",
            NodeKind::Module => "module",
            NodeKind::File => "file",
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Call,
    Import,
    Inheritance,
}

/// Inclusive 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(u32, u32)", into = "(u32, u32)")]
pub struct Span {
    pub start_line: u32,
    pub end_line: u32,
}

impl Span {
    pub fn new(start_line: u32, end_line: u32) -> Self {
        Self {
            start_line,
            end_line,
        }
    }

    pub fn contains_line(&self, line: u32) -> bool {
        self.start_line <= line && line <= self.end_line
    }

    pub fn len(&self) -> u32 {
        self.end_line.saturating_sub(self.start_line) + 1
    }

    pub fn is_empty(&self) -> bool {
        self.end_line < self.start_line
    }
}

impl From<(u32, u32)> for Span {
    fn from((s, e): (u32, u32)) -> Self {
        Span::new(s, e)
    }
}

impl From<Span> for (u32, u32) {
    fn from(span: Span) -> Self {
        (span.start_line, span.end_line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeNode {
    pub id: String,
    pub kind: NodeKind,
    pub name: String,
    pub qualified_name: String,
    pub file_path: String,
    pub span: Span,
    pub language: String,
    pub code: String,
}

impl CodeNode {
    fn validate(&self) -> Result<(), GraphError> {
        let invalid = |reason: &str| GraphError::InvalidNode {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("id is empty"));
        }
        if self.span.start_line > self.span.end_line {
            return Err(invalid("span start_line is after end_line"));
        }
        if self.kind.is_callable() && self.code.is_empty() {
            return Err(invalid("function and method nodes need source code"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CodeEdge {
    pub from: String,
    pub to: String,
    pub kind: EdgeKind,
}

impl CodeEdge {
    pub fn new(from: impl Into<String>, to: impl Into<String>, kind: EdgeKind) -> Self {
        Self {
            from: from.into(),
            to: to.into(),
            kind,
        }
    }

    pub fn call(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self::new(from, to, EdgeKind::Call)
    }
}

/// Map from node id to its sorted callee ids.
pub type Adjacency = BTreeMap<String, Vec<String>>;

/// A validated code graph. Construct with [`build_graph`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CodeGraph {
    nodes: BTreeMap<String, CodeNode>,
    edges: Vec<CodeEdge>,
    adjacency: Adjacency,
}

/// Validates nodes and edges and derives the call adjacency.
///
/// Duplicate `(from, to, kind)` edges collapse into one. Self-calls are kept
/// in the edge list but left out of the adjacency.
pub fn build_graph(nodes: Vec<CodeNode>, edges: Vec<CodeEdge>) -> Result<CodeGraph, GraphError> {
    let mut by_id = BTreeMap::new();
    for node in nodes {
        node.validate()?;
        if by_id.contains_key(&node.id) {
            return Err(GraphError::DuplicateNode(node.id));
        }
        by_id.insert(node.id.clone(), node);
    }

    let mut unique = BTreeSet::new();
    for edge in edges {
        if !by_id.contains_key(&edge.from) || !by_id.contains_key(&edge.to) {
            return Err(GraphError::DanglingEdge {
                from: edge.from,
                to: edge.to,
            });
        }
        unique.insert(edge);
    }
    let edges: Vec<CodeEdge> = unique.into_iter().collect();

    let mut adjacency: Adjacency = by_id.keys().map(|id| (id.clone(), Vec::new())).collect();
    for edge in &edges {
        if edge.kind == EdgeKind::Call && edge.from != edge.to {
            adjacency
                .get_mut(&edge.from)
                .expect("validated endpoint")
                .push(edge.to.clone());
        }
    }
    for callees in adjacency.values_mut() {
        callees.sort();
        callees.dedup();
    }

    Ok(CodeGraph {
        nodes: by_id,
        edges,
        adjacency,
    })
}

impl CodeGraph {
    pub fn node(&self, id: &str) -> Option<&CodeNode> {
        self.nodes.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &CodeNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Edges sorted by `(from, to, kind)`.
    pub fn edges(&self) -> &[CodeEdge] {
        &self.edges
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    /// Sorted callee ids of `id`, excluding self-calls.
    pub fn callees(&self, id: &str) -> &[String] {
        self.adjacency.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The node id that represents `file_path` as a module, if present.
    pub fn module_id(&self, file_path: &str) -> Option<&str> {
        self.nodes
            .values()
            .find(|n| matches!(n.kind, NodeKind::Module | NodeKind::File) && n.file_path == file_path)
            .map(|n| n.id.as_str())
    }

    /// The subgraph of function and method nodes with the call edges among them.
    pub fn callable_subgraph(&self) -> CodeGraph {
        let nodes: Vec<CodeNode> = self
            .nodes
            .values()
            .filter(|n| n.kind.is_callable())
            .cloned()
            .collect();
        let keep: BTreeSet<&str> = nodes.iter().map(|n| n.id.as_str()).collect();
        let edges = self
            .edges
            .iter()
            .filter(|e| e.kind == EdgeKind::Call && keep.contains(e.from.as_str()) && keep.contains(e.to.as_str()))
            .cloned()
            .collect();
        build_graph(nodes, edges).expect("subgraph of a valid graph is valid")
    }
}
