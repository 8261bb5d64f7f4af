//! Bottom-up summarization: one node, one level plan, then modules.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::backend::{BackendError, Gate, Generator};
use super::prompt::{module_prompt, render_entries, ChildEntry, PromptTemplate};
use super::schema::{parse_reply, StructuredSummary};
use crate::exec::{self, Exec};
use crate::graph::{CodeGraph, CodeNode, LevelPlan};
use crate::util::write_atomic;

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("level plan names `{0}`, which is not in the graph")]
    UnknownNode(String),
    #[error("summary for `{0}` was already written in this run")]
    DuplicateSummary(String),
    #[error("writing summary store: {0}")]
    Store(#[from] std::io::Error),
    #[error("summary store line {line}: {message}")]
    StoreFormat { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub node_id: String,
    pub message: String,
}

/// Summaries written so far, keyed by node id. Each id is written once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryCache {
    entries: BTreeMap<String, StructuredSummary>,
}

impl SummaryCache {
    pub fn get(&self, id: &str) -> Option<&StructuredSummary> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &StructuredSummary> {
        self.entries.values()
    }

    pub fn insert(&mut self, summary: StructuredSummary) -> Result<(), SummarizeError> {
        if self.entries.contains_key(&summary.node_id) {
            return Err(SummarizeError::DuplicateSummary(summary.node_id));
        }
        self.entries.insert(summary.node_id.clone(), summary);
        Ok(())
    }

    /// One JSON object per line, ascending node id.
    pub fn to_jsonl(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in self.entries.values() {
            serde_json::to_writer(&mut out, s).expect("summary serializes");
            out.push(b'\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, SummarizeError> {
        let mut cache = SummaryCache::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let s: StructuredSummary = serde_json::from_str(line).map_err(|e| SummarizeError::StoreFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
            cache.insert(s)?;
        }
        Ok(cache)
    }
}

/// The `summaries.jsonl` file, rewritten atomically after every level.
#[derive(Debug, Clone)]
pub struct SummaryStore {
    path: PathBuf,
}

impl SummaryStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, cache: &SummaryCache) -> Result<(), SummarizeError> {
        Ok(write_atomic(&self.path, &cache.to_jsonl())?)
    }

    pub fn read(&self) -> Result<SummaryCache, SummarizeError> {
        SummaryCache::from_jsonl(&std::fs::read_to_string(&self.path)?)
    }
}

#[derive(Debug, Clone)]
pub struct NodeSummary {
    pub summary: StructuredSummary,
    pub prompt: String,
    pub warnings: Vec<String>,
    pub degraded: bool,
}

const REPAIR_SUFFIX: &str = "\n\nYour previous reply could not be parsed as the required JSON object. \
Reply again with only the fenced ```json object described above.\n\nPrevious reply:\n";

/// Summarizes one node from its code and the cached summaries of its callees.
///
/// Callees whose edge from `id` is in `broken` get a cycle placeholder line.
/// Unparseable output gets one repair request; if that also fails the summary
/// is synthesized from the raw text and flagged as degraded.
pub fn summarize_node(
    id: &str,
    cache: &SummaryCache,
    graph: &CodeGraph,
    broken: &BTreeSet<(String, String)>,
    template: &PromptTemplate,
    backend: &dyn Generator,
) -> Result<NodeSummary, SummarizeError> {
    summarize_gated(id, cache, graph, broken, template, &Gate::new(backend))
}

fn summarize_gated(
    id: &str,
    cache: &SummaryCache,
    graph: &CodeGraph,
    broken: &BTreeSet<(String, String)>,
    template: &PromptTemplate,
    backend: &Gate<'_>,
) -> Result<NodeSummary, SummarizeError> {
    let node = graph.node(id).ok_or_else(|| SummarizeError::UnknownNode(id.to_string()))?;
    let mut warnings = Vec::new();
    let mut entries = Vec::new();
    for callee in graph.callees(id) {
        if let Some(s) = cache.get(callee) {
            entries.push(ChildEntry::Summary(s));
        } else if broken.contains(&(id.to_string(), callee.clone())) {
            let name = graph.node(callee).map_or(callee.as_str(), |n| n.name.as_str());
            entries.push(ChildEntry::CycleGap { name });
        } else if graph.node(callee).is_some_and(|n| n.kind.is_callable()) {
            warnings.push(format!("callee {callee} has no summary yet"));
        }
    }
    let prompt = render_entries(template, node, &entries);

    let first = backend.generate(&prompt)?;
    let (summary, degraded) = match parse_reply(node, &first) {
        Some((s, w)) => {
            warnings.extend(w);
            (s, false)
        }
        None => {
            let second = backend.generate(&format!("{prompt}{REPAIR_SUFFIX}{first}"))?;
            match parse_reply(node, &second) {
                Some((s, w)) => {
                    warnings.push("first reply unparseable; repaired on retry".into());
                    warnings.extend(w);
                    (s, false)
                }
                None => {
                    warnings.push("reply unparseable after repair; using degraded summary".into());
                    (StructuredSummary::degraded(node, &second), true)
                }
            }
        }
    };
    warnings.extend(audit_dependencies(&summary, node, graph));
    Ok(NodeSummary {
        summary,
        prompt,
        warnings,
        degraded,
    })
}

/// Dependency names should be callees or at least appear in the code.
fn audit_dependencies(summary: &StructuredSummary, node: &CodeNode, graph: &CodeGraph) -> Vec<String> {
    let callee_names: BTreeSet<&str> = graph
        .callees(&node.id)
        .iter()
        .filter_map(|c| graph.node(c))
        .map(|n| n.name.as_str())
        .collect();
    summary
        .dependencies
        .iter()
        .filter(|d| !callee_names.contains(d.name.as_str()) && !node.code.contains(d.name.as_str()))
        .map(|d| format!("dependency `{}` is neither a callee nor mentioned in the code", d.name))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct ProcessOptions<'a> {
    pub workers: usize,
    pub store: Option<&'a SummaryStore>,
}

impl Default for ProcessOptions<'_> {
    fn default() -> Self {
        Self { workers: 1, store: None }
    }
}

#[derive(Debug, Default)]
pub struct LevelRun {
    pub cache: SummaryCache,
    /// File path to the ids summarized in it, in processing order.
    pub modules: BTreeMap<String, Vec<String>>,
    /// The prompt each node was summarized with.
    pub prompts: BTreeMap<String, String>,
    pub warnings: Vec<Warning>,
    pub degraded: BTreeSet<String>,
    /// Cache size after each level.
    pub cache_sizes: Vec<usize>,
}

/// Summarizes the plan level by level.
///
/// Nodes of one level run on a pool of `workers` against the cache as it
/// stood before the level; results merge in node-id order at the level
/// barrier, then the store (if any) is rewritten. Nodes that are not
/// functions or methods are skipped. A backend outage surfaces once the
/// current level has drained.
pub fn process_levels(
    plan: &LevelPlan,
    graph: &CodeGraph,
    template: &PromptTemplate,
    backend: &dyn Generator,
    options: ProcessOptions<'_>,
) -> Result<LevelRun, SummarizeError> {
    let broken: BTreeSet<(String, String)> = plan.broken_edges.iter().cloned().collect();
    let gate = Gate::new(backend);
    let exec = Exec::workers(options.workers);
    let mut run = LevelRun::default();

    for level in &plan.levels {
        let mut ids: Vec<&str> = Vec::with_capacity(level.len());
        for id in level {
            let node = graph.node(id).ok_or_else(|| SummarizeError::UnknownNode(id.clone()))?;
            if node.kind.is_callable() {
                ids.push(id);
            }
        }
        ids.sort_unstable();

        let cache = &run.cache;
        let results = exec::map(exec, &ids, |id| summarize_gated(id, cache, graph, &broken, template, &gate));

        let mut first_error = None;
        for (id, result) in ids.iter().zip(results) {
            match result {
                Ok(out) => {
                    let node = graph.node(id).expect("checked above");
                    run.modules.entry(node.file_path.clone()).or_default().push(id.to_string());
                    run.warnings.extend(out.warnings.into_iter().map(|message| Warning {
                        node_id: id.to_string(),
                        message,
                    }));
                    if out.degraded {
                        run.degraded.insert(id.to_string());
                    }
                    run.prompts.insert(id.to_string(), out.prompt);
                    run.cache.insert(out.summary)?;
                }
                Err(e) => {
                    log::error!("summarizing {id} failed: {e}");
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(store) = options.store {
            store.write(&run.cache)?;
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        run.cache_sizes.push(run.cache.len());
    }
    for w in &run.warnings {
        log::warn!("{}: {}", w.node_id, w.message);
    }
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub name: String,
    pub purpose: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleSummary {
    pub module_id: String,
    pub file_path: String,
    pub overview: String,
    pub function_index: Vec<IndexEntry>,
}

/// One overview per file from its functions' `(name, details)` pairs, taken
/// in node-id order.
pub fn summarize_modules(
    modules: &BTreeMap<String, Vec<String>>,
    cache: &SummaryCache,
    graph: &CodeGraph,
    backend: &dyn Generator,
    workers: usize,
) -> Result<Vec<ModuleSummary>, SummarizeError> {
    let gate = Gate::new(backend);
    let files: Vec<(&String, Vec<&StructuredSummary>)> = modules
        .iter()
        .map(|(file, ids)| {
            let mut ids: Vec<&String> = ids.iter().collect();
            ids.sort();
            ids.dedup();
            (file, ids.into_iter().filter_map(|id| cache.get(id)).collect())
        })
        .collect();

    let results = exec::map(Exec::workers(workers), &files, |(file, summaries)| {
        let pairs: Vec<(&str, &str)> = summaries.iter().map(|s| (s.name.as_str(), s.details.as_str())).collect();
        let overview = gate.generate(&module_prompt(file, &pairs))?;
        let overview = match overview.trim() {
            "" => format!("Module {file}"),
            text => text.to_string(),
        };
        Ok(ModuleSummary {
            module_id: graph.module_id(file).unwrap_or(file).to_string(),
            file_path: file.to_string(),
            overview,
            function_index: summaries
                .iter()
                .map(|s| IndexEntry {
                    name: s.name.clone(),
                    purpose: s.purpose.clone(),
                })
                .collect(),
        })
    });
    results.into_iter().collect()
}

pub fn modules_to_jsonl(modules: &[ModuleSummary]) -> Vec<u8> {
    let mut out = Vec::new();
    for m in modules {
        serde_json::to_writer(&mut out, m).expect("module summary serializes");
        out.push(b'\n');
    }
    out
}
