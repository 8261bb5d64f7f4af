//! Hierarchical code graph summarization: extract a call graph, summarize it
//! bottom-up, embed code and summaries, and answer retrieval queries.

pub mod bench;
pub mod embed;
pub mod exec;
pub mod graph;
mod http;
pub mod index;
pub mod lsp;
pub mod pipeline;
pub mod query;
pub mod summarize;
pub mod util;

pub use exec::Exec;
pub use graph::{build_graph, build_levels, CodeEdge, CodeGraph, CodeNode, EdgeKind, LevelPlan, NodeKind, Span};
