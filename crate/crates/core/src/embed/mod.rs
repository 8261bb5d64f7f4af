//! Dense, unit-norm vector embeddings for code and summaries.

mod hash;
mod http;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Exec};
use crate::summarize::StructuredSummary;
use crate::util::sha256_hex;

pub use hash::HashEmbedder;
pub use http::HttpEmbedder;

pub const DEFAULT_DIMENSION: usize = 384;

/// Largest tolerated fraction of failed records in a batch.
const MAX_FAILURE_RATIO: f64 = 0.10;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("embedding backend returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{failed} of {total} records failed to embed (first: {first})")]
    Batch { failed: usize, total: usize, first: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectionKind {
    Code,
    Summary,
}

impl CollectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CollectionKind::Code => "code",
            CollectionKind::Summary => "summary",
        }
    }
}

impl fmt::Display for CollectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CollectionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "code" => Ok(CollectionKind::Code),
            "summary" => Ok(CollectionKind::Summary),
            other => Err(format!("unknown collection `{other}` (expected code or summary)")),
        }
    }
}

/// A vector with unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `raw`. A zero vector (or empty input) becomes the first
    /// basis vector.
    pub fn normalized(raw: &[f64]) -> Self {
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self::basis(raw.len().max(1));
        }
        Self(raw.iter().map(|x| (x / norm) as f32).collect())
    }

    /// e₁ of dimension `dim`.
    pub fn basis(dim: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        Self(v)
    }

    /// Wraps stored values without renormalizing.
    pub(crate) fn from_stored(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
    }

    /// Dot product accumulated in `f64`, in index order.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub node_id: String,
    pub collection: CollectionKind,
    pub vector: EmbeddingVector,
    /// SHA-256 hex of the embedded text.
    pub text_digest: String,
}

/// Text-to-vector backend. Implementations must accept concurrent calls.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    /// Raw (unnormalized) vector for non-blank text.
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Embeds `text` as a unit vector. Blank text maps to e₁.
pub fn embed(text: &str, backend: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    let dim = backend.dimension();
    if text.trim().is_empty() {
        return Ok(EmbeddingVector::basis(dim));
    }
    let raw = backend.embed_raw(text)?;
    if raw.len() != dim {
        return Err(EmbedError::DimensionMismatch {
            expected: dim,
            got: raw.len(),
        });
    }
    Ok(EmbeddingVector::normalized(&raw))
}

/// Canonical text used when embedding a summary.
pub fn flatten_summary(summary: &StructuredSummary) -> String {
    let deps: Vec<&str> = summary.dependencies.iter().map(|d| d.name.as_str()).collect();
    format!("{}\n{}\ndeps: {}", summary.purpose, summary.details, deps.join(", "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedInput {
    pub node_id: String,
    pub collection: CollectionKind,
    pub text: String,
}

impl EmbedInput {
    pub fn new(node_id: impl Into<String>, collection: CollectionKind, text: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            collection,
            text: text.into(),
        }
    }
}

#[derive(Debug, Default)]
pub struct CorpusEmbedding {
    /// Sorted by `(collection, node_id)`.
    pub records: Vec<EmbeddingRecord>,
    /// `(node_id, collection, error)` for records that failed.
    pub failures: Vec<(String, CollectionKind, String)>,
}

/// Embeds a batch over a pool of `workers`.
///
/// Individual failures are tolerated up to 10% of the batch; beyond that the
/// whole batch fails.
pub fn embed_corpus(inputs: &[EmbedInput], backend: &dyn Embedder, workers: usize) -> Result<CorpusEmbedding, EmbedError> {
    let results = exec::map(Exec::workers(workers), inputs, |input| {
        embed(&input.text, backend).map(|vector| EmbeddingRecord {
            node_id: input.node_id.clone(),
            collection: input.collection,
            vector,
            text_digest: sha256_hex(&input.text),
        })
    });

    let mut out = CorpusEmbedding::default();
    for (input, result) in inputs.iter().zip(results) {
        match result {
            Ok(record) => out.records.push(record),
            Err(e) => {
                log::warn!("embedding {} ({}) failed: {e}", input.node_id, input.collection);
                out.failures.push((input.node_id.clone(), input.collection, e.to_string()));
            }
        }
    }
    let total = inputs.len();
    if total > 0 && out.failures.len() as f64 / total as f64 > MAX_FAILURE_RATIO {
        return Err(EmbedError::Batch {
            failed: out.failures.len(),
            total,
            first: out.failures[0].2.clone(),
        });
    }
    out.records
        .sort_by(|a, b| (a.collection, &a.node_id).cmp(&(b.collection, &b.node_id)));
    Ok(out)
}
