//! Query answering: embed, search one collection, optionally expand the hits
//! into a scored context subgraph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::embed::{embed, CollectionKind, EmbedError, Embedder};
use crate::graph::{CodeEdge, CodeGraph};
use crate::index::{Collection, IndexError, SearchHit};

/// Weight of the normalized retrieval score in the importance blend; the rest
/// goes to degree centrality.
pub const RETRIEVAL_WEIGHT: f64 = 0.7;
pub const DEGREE_WEIGHT: f64 = 0.3;
pub const MAX_EXPANSION_DEPTH: usize = 3;

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("expansion depth {0} is outside 0..=3")]
    InvalidDepth(usize),
    #[error("the {0} collection is not loaded")]
    CollectionNotLoaded(CollectionKind),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone)]
pub struct QueryRequest {
    pub text: String,
    pub collection: CollectionKind,
    pub k: usize,
    pub expand_context: bool,
    pub expansion_depth: usize,
}

impl QueryRequest {
    pub fn new(text: impl Into<String>, collection: CollectionKind, k: usize) -> Self {
        Self {
            text: text.into(),
            collection,
            k,
            expand_context: false,
            expansion_depth: 1,
        }
    }

    pub fn with_context(mut self, depth: usize) -> Self {
        self.expand_context = true;
        self.expansion_depth = depth;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContextSubgraph {
    pub nodes: BTreeSet<String>,
    pub edges: Vec<CodeEdge>,
    pub importance: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryAnswer {
    pub hits: Vec<SearchHit>,
    pub context: Option<ContextSubgraph>,
}

pub fn answer(
    request: &QueryRequest,
    graph: &CodeGraph,
    collections: &[&Collection],
    backend: &dyn Embedder,
) -> Result<QueryAnswer, QueryError> {
    if request.k == 0 {
        return Err(QueryError::InvalidK);
    }
    if request.expansion_depth > MAX_EXPANSION_DEPTH {
        return Err(QueryError::InvalidDepth(request.expansion_depth));
    }
    let collection = collections
        .iter()
        .find(|c| c.kind() == request.collection)
        .ok_or(QueryError::CollectionNotLoaded(request.collection))?;
    let query = embed(&request.text, backend)?;
    let hits = collection.search(&query, request.k)?;
    let context = request.expand_context.then(|| {
        let mut sub = rehydrate(&hits, graph, request.expansion_depth);
        sub.importance = score_importance(&sub, &hits);
        sub
    });
    Ok(QueryAnswer { hits, context })
}

fn undirected_neighbors(graph: &CodeGraph) -> BTreeMap<&str, BTreeSet<&str>> {
    let mut nbrs: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in graph.edges() {
        if e.from != e.to {
            nbrs.entry(&e.from).or_default().insert(&e.to);
            nbrs.entry(&e.to).or_default().insert(&e.from);
        }
    }
    nbrs
}

/// Breadth-first expansion over all edge kinds, ignoring direction, up to
/// `depth` hops from the hits. `importance` is left empty.
pub fn rehydrate(hits: &[SearchHit], graph: &CodeGraph, depth: usize) -> ContextSubgraph {
    let nbrs = undirected_neighbors(graph);
    let mut nodes: BTreeSet<String> = BTreeSet::new();
    let mut queue: VecDeque<(&str, usize)> = VecDeque::new();
    for h in hits {
        if nodes.insert(h.node_id.clone()) {
            queue.push_back((h.node_id.as_str(), 0));
        }
    }
    while let Some((id, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for &n in nbrs.get(id).into_iter().flatten() {
            if nodes.insert(n.to_string()) {
                queue.push_back((n, d + 1));
            }
        }
    }
    let edges = graph
        .edges()
        .iter()
        .filter(|e| nodes.contains(&e.from) && nodes.contains(&e.to))
        .cloned()
        .collect();
    ContextSubgraph {
        nodes,
        edges,
        importance: BTreeMap::new(),
    }
}

/// `0.7 · retrieval + 0.3 · degree / max_degree`, then scaled so the top node
/// scores 1.
///
/// Retrieval is the hit score min-max normalized across hits (all 1 when the
/// hits tie) and 0 for non-hits. Degree counts distinct neighbors inside the
/// subgraph.
pub fn score_importance(subgraph: &ContextSubgraph, hits: &[SearchHit]) -> BTreeMap<String, f64> {
    let (lo, hi) = hits
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| (lo.min(h.score), hi.max(h.score)));
    let retrieval: BTreeMap<&str, f64> = hits
        .iter()
        .map(|h| {
            let r = if hi > lo { (h.score - lo) / (hi - lo) } else { 1.0 };
            (h.node_id.as_str(), r)
        })
        .collect();

    let mut nbrs: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in &subgraph.edges {
        if e.from != e.to {
            nbrs.entry(&e.from).or_default().insert(&e.to);
            nbrs.entry(&e.to).or_default().insert(&e.from);
        }
    }
    let degree = |id: &str| nbrs.get(id).map_or(0, BTreeSet::len);
    let max_degree = subgraph.nodes.iter().map(|n| degree(n)).max().unwrap_or(0);

    let raw: BTreeMap<String, f64> = subgraph
        .nodes
        .iter()
        .map(|n| {
            let r = retrieval.get(n.as_str()).copied().unwrap_or(0.0);
            let d = if max_degree == 0 {
                0.0
            } else {
                degree(n) as f64 / max_degree as f64
            };
            (n.clone(), RETRIEVAL_WEIGHT * r + DEGREE_WEIGHT * d)
        })
        .collect();
    let top = raw.values().copied().fold(0.0, f64::max);
    raw.into_iter()
        .map(|(n, s)| (n, if top > 0.0 { s / top } else { 1.0 }))
        .collect()
}

/// JSON shape served by the `query` command.
pub fn answer_to_json(answer: &QueryAnswer, collection: &Collection) -> serde_json::Value {
    let hits: Vec<serde_json::Value> = answer
        .hits
        .iter()
        .map(|h| {
            let meta = collection.meta(&h.node_id);
            serde_json::json!({
                "node_id": h.node_id,
                "score": h.score,
                "rank": h.rank,
                "file_path": meta.map(|m| m.file_path.as_str()),
                "name": meta.map(|m| m.name.as_str()),
            })
        })
        .collect();
    let mut out = serde_json::json!({ "hits": hits });
    if let Some(ctx) = &answer.context {
        out["context"] = serde_json::to_value(ctx).expect("context serializes");
    }
    out
}

pub fn answer_to_table(answer: &QueryAnswer, collection: &Collection) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>4}  {:>8}  {:<28}  node", "rank", "score", "name");
    for h in &answer.hits {
        let name = collection.meta(&h.node_id).map_or("", |m| m.name.as_str());
        let _ = writeln!(s, "{:>4}  {:>8.4}  {:<28}  {}", h.rank, h.score, name, h.node_id);
    }
    if let Some(ctx) = &answer.context {
        let _ = writeln!(s, "\ncontext: {} nodes, {} edges", ctx.nodes.len(), ctx.edges.len());
        let mut ranked: Vec<(&String, &f64)> = ctx.importance.iter().collect();
        ranked.sort_by(|a, b| b.1.total_cmp(a.1).then(a.0.cmp(b.0)));
        for (id, score) in ranked {
            let _ = writeln!(s, "  {score:>6.3}  {id}");
        }
    }
    s
}
