//! Retrieval benchmark: synthetic queries from summaries, evaluation against
//! the code and summary collections, and the comparison report.

mod metrics;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{coverage, ndcg_at_k, pass_at_k, Results};
pub use report::{improvement, CollectionMetrics, Improvement, MetricsReport, Relative};

use crate::embed::{embed, EmbedError, Embedder};
use crate::exec::{self, Exec};
use crate::graph::CodeGraph;
use crate::index::{Collection, IndexError};
use crate::summarize::backend::{BackendError, Gate, Generator};
use crate::summarize::prompt::{condense_prompt, query_prompt};
use crate::summarize::StructuredSummary;

pub const MAX_QUERY_WORDS: usize = 10;
pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];
pub const HEADLINE_K: usize = 10;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("benchmark has no queries")]
    EmptyBenchmark,
    #[error("no result list for query `{0}`")]
    MissingResults(String),
    #[error("code and summary collections cover different node sets ({code} vs {summary} ids)")]
    NodeSetMismatch { code: usize, summary: usize },
    #[error("relevant id `{0}` is not a node of the graph")]
    UnknownRelevant(String),
    #[error("no summaries to generate queries from")]
    NoSummaries,
    #[error("k values must be positive")]
    InvalidK,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("query file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkQuery {
    pub query_id: String,
    /// At most ten whitespace-separated words.
    pub text: String,
    pub origin_node_id: String,
    pub relevant_ids: BTreeSet<String>,
}

pub fn queries_to_jsonl(queries: &[BenchmarkQuery]) -> Vec<u8> {
    let mut out = Vec::new();
    for q in queries {
        serde_json::to_writer(&mut out, q).expect("query serializes");
        out.push(b'\n');
    }
    out
}

pub fn queries_from_jsonl(text: &str) -> Result<Vec<BenchmarkQuery>, BenchError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| BenchError::Format {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct QuerySet {
    pub queries: Vec<BenchmarkQuery>,
    pub warnings: Vec<String>,
}

/// Drops list numbering, bullets and surrounding quotes from a reply line.
fn clean_query_line(line: &str) -> &str {
    let mut s = line.trim();
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        if let Some(rest) = s[digits..].strip_prefix(['.', ')', ':']) {
            s = rest.trim_start();
        }
    }
    if let Some(rest) = s.strip_prefix(['-', '*', '•']) {
        s = rest.trim_start();
    }
    s.trim_matches(|c| c == '"' || c == '\'' || c == '`').trim()
}

/// Two backend calls per summary: condense it, then ask for `per_function`
/// short queries. Each query's only relevant id is the function it came from.
/// Queries longer than ten words are truncated with a warning.
pub fn generate_queries(
    summaries: &[&StructuredSummary],
    backend: &dyn Generator,
    per_function: usize,
    workers: usize,
) -> Result<QuerySet, BenchError> {
    if summaries.is_empty() {
        return Err(BenchError::NoSummaries);
    }
    let gate = Gate::new(backend);
    let replies = exec::map(Exec::workers(workers), summaries, |s| -> Result<String, BackendError> {
        let condensed = gate.generate(&condense_prompt(s))?;
        let condensed = match condensed.trim() {
            "" => s.purpose.as_str(),
            c => c,
        };
        gate.generate(&query_prompt(condensed, &s.details, per_function))
    });

    let mut set = QuerySet::default();
    for (s, reply) in summaries.iter().zip(replies) {
        let reply = reply?;
        let lines: Vec<&str> = reply.lines().map(clean_query_line).filter(|l| !l.is_empty()).collect();
        if lines.len() < per_function {
            set.warnings.push(format!("{}: asked for {per_function} queries, got {}", s.node_id, lines.len()));
        }
        for (i, line) in lines.into_iter().take(per_function).enumerate() {
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() > MAX_QUERY_WORDS {
                set.warnings.push(format!(
                    "{}: query {i} had {} words; truncated to {MAX_QUERY_WORDS}",
                    s.node_id,
                    words.len()
                ));
            }
            set.queries.push(BenchmarkQuery {
                query_id: format!("{}#{i}", s.node_id),
                text: words[..words.len().min(MAX_QUERY_WORDS)].join(" "),
                origin_node_id: s.node_id.clone(),
                relevant_ids: BTreeSet::from([s.node_id.clone()]),
            });
        }
    }
    Ok(set)
}

/// Retrieves every query against both collections with the same query
/// vector and scores both result sets.
pub fn run_benchmark(
    graph: &CodeGraph,
    code: &Collection,
    summary: &Collection,
    queries: &[BenchmarkQuery],
    ks: &[usize],
    embedder: &dyn Embedder,
    workers: usize,
) -> Result<MetricsReport, BenchError> {
    if queries.is_empty() {
        return Err(BenchError::EmptyBenchmark);
    }
    if ks.is_empty() || ks.contains(&0) {
        return Err(BenchError::InvalidK);
    }
    if !code.node_ids().eq(summary.node_ids()) {
        return Err(BenchError::NodeSetMismatch {
            code: code.len(),
            summary: summary.len(),
        });
    }
    if let Some(id) = queries.iter().flat_map(|q| &q.relevant_ids).find(|id| !graph.contains(id)) {
        return Err(BenchError::UnknownRelevant(id.clone()));
    }

    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let depth = *ks.last().expect("non-empty");
    let headline_k = if ks.contains(&HEADLINE_K) { HEADLINE_K } else { depth };

    let mut ordered: Vec<&BenchmarkQuery> = queries.iter().collect();
    ordered.sort_by(|a, b| a.query_id.cmp(&b.query_id));
    let retrieved = exec::map(Exec::workers(workers), &ordered, |q| -> Result<_, BenchError> {
        let v = embed(&q.text, embedder)?;
        let ids = |c: &Collection| -> Result<Vec<String>, BenchError> {
            Ok(c.search(&v, depth)?.into_iter().map(|h| h.node_id).collect())
        };
        Ok((q.query_id.clone(), ids(code)?, ids(summary)?))
    });
    let mut code_results = Results::new();
    let mut summary_results = Results::new();
    for r in retrieved {
        let (id, c, s) = r?;
        code_results.insert(id.clone(), c);
        summary_results.insert(id, s);
    }

    let score = |results: &Results| -> Result<CollectionMetrics, BenchError> {
        let mut m = CollectionMetrics {
            pass_at: BTreeMap::new(),
            coverage: coverage(queries, results, headline_k)?,
            ndcg: ndcg_at_k(queries, results, headline_k)?,
            coverage_at: BTreeMap::new(),
            ndcg_at: BTreeMap::new(),
        };
        for &k in &ks {
            m.pass_at.insert(k, pass_at_k(queries, results, k)?);
            m.coverage_at.insert(k, coverage(queries, results, k)?);
            m.ndcg_at.insert(k, ndcg_at_k(queries, results, k)?);
        }
        Ok(m)
    };
    let code_m = score(&code_results)?;
    let summary_m = score(&summary_results)?;
    let improvements = ks
        .iter()
        .map(|k| (*k, improvement(code_m.pass_at[k], summary_m.pass_at[k])))
        .collect();
    Ok(MetricsReport {
        queries: queries.len(),
        functions: code.len(),
        ks,
        headline_k,
        code: code_m,
        summary: summary_m,
        improvements,
    })
}
