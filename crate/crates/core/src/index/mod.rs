//! Per-collection vector store with exact cosine top-k search.

mod format;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{dot, CollectionKind, EmbeddingRecord, EmbeddingVector};
use crate::exec::{self, Exec};
use crate::graph::{CodeNode, NodeKind};

pub use format::{export_json, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("vector has dimension {got}, collection expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("record belongs to the {got} collection, not {expected}")]
    CollectionMismatch { expected: CollectionKind, got: CollectionKind },
    #[error("collection is empty")]
    EmptyCollection,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
    #[error("index format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub file_path: String,
    pub name: String,
    pub kind: NodeKind,
}

impl From<&CodeNode> for NodeMeta {
    fn from(n: &CodeNode) -> Self {
        Self {
            file_path: n.file_path.clone(),
            name: n.name.clone(),
            kind: n.kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub node_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    kind: CollectionKind,
    dimension: usize,
    /// Sorted by node id.
    records: Vec<EmbeddingRecord>,
    metadata: BTreeMap<String, NodeMeta>,
}

/// `(score desc, node_id asc)`.
fn hit_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl Collection {
    pub fn new(kind: CollectionKind, dimension: usize) -> Self {
        Self {
            kind,
            dimension,
            records: Vec::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn kind(&self) -> CollectionKind {
        self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn get(&self, node_id: &str) -> Option<&EmbeddingRecord> {
        self.position(node_id).ok().map(|i| &self.records[i])
    }

    pub fn meta(&self, node_id: &str) -> Option<&NodeMeta> {
        self.metadata.get(node_id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.node_id.as_str())
    }

    fn position(&self, node_id: &str) -> Result<usize, usize> {
        self.records.binary_search_by(|r| r.node_id.as_str().cmp(node_id))
    }

    /// Inserts or replaces the record with the same node id.
    pub fn upsert(&mut self, record: EmbeddingRecord, meta: Option<NodeMeta>) -> Result<(), IndexError> {
        if record.collection != self.kind {
            return Err(IndexError::CollectionMismatch {
                expected: self.kind,
                got: record.collection,
            });
        }
        if record.vector.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: record.vector.dimension(),
            });
        }
        match meta {
            Some(m) => {
                self.metadata.insert(record.node_id.clone(), m);
            }
            None => {
                self.metadata.remove(&record.node_id);
            }
        }
        match self.position(&record.node_id) {
            Ok(i) => self.records[i] = record,
            Err(i) => self.records.insert(i, record),
        }
        Ok(())
    }

    /// Exact top-`min(k, len)` by cosine, ties broken by ascending node id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        self.search_with(query, k, Exec::Sequential)
    }

    /// [`search`](Self::search) with the similarity scan spread over `exec`.
    pub fn search_with(&self, query: &EmbeddingVector, k: usize, exec: Exec) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        if self.records.is_empty() {
            return Err(IndexError::EmptyCollection);
        }
        if query.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: query.dimension(),
            });
        }
        let q = query.values();
        let scores = exec::map(exec, &self.records, |r| dot(q, r.vector.values()));
        let mut scored: Vec<(f64, &str)> = scores
            .into_iter()
            .zip(&self.records)
            .map(|(s, r)| (s, r.node_id.as_str()))
            .collect();

        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, |a, b| hit_order(*a, *b));
            scored.truncate(k);
        }
        scored.sort_by(|a, b| hit_order(*a, *b));
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, id))| SearchHit {
                node_id: id.to_string(),
                score,
                rank: i + 1,
            })
            .collect())
    }
}
