use serde::{Deserialize, Serialize};

use super::{build_graph, CodeEdge, CodeGraph, CodeNode, GraphError};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: Vec<CodeNode>,
    edges: Vec<CodeEdge>,
}

/// Canonical JSON: nodes sorted by id, edges by `(from, to, kind)`, pretty
/// printed with a trailing newline.
pub fn graph_to_json(graph: &CodeGraph) -> Vec<u8> {
    let doc = GraphDoc {
        nodes: graph.nodes().cloned().collect(),
        edges: graph.edges().to_vec(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("graph serializes");
    out.push(b'\n');
    out
}

pub fn json_to_graph(bytes: &[u8]) -> Result<CodeGraph, GraphError> {
    let doc: GraphDoc = serde_json::from_slice(bytes).map_err(|e| GraphError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    build_graph(doc.nodes, doc.edges)
}
