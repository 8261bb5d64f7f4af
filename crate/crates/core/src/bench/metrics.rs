use std::collections::{BTreeMap, BTreeSet};

use super::{BenchError, BenchmarkQuery};

/// Ranked node ids per query id.
pub type Results = BTreeMap<String, Vec<String>>;

fn checked<'a>(queries: &[BenchmarkQuery], results: &'a Results) -> Result<Vec<&'a [String]>, BenchError> {
    if queries.is_empty() {
        return Err(BenchError::EmptyBenchmark);
    }
    queries
        .iter()
        .map(|q| {
            results
                .get(&q.query_id)
                .map(Vec::as_slice)
                .ok_or_else(|| BenchError::MissingResults(q.query_id.clone()))
        })
        .collect()
}

fn top_k(ranked: &[String], k: usize) -> &[String] {
    &ranked[..k.min(ranked.len())]
}

/// Percentage of queries with at least one relevant id in the top `k`.
pub fn pass_at_k(queries: &[BenchmarkQuery], results: &Results, k: usize) -> Result<f64, BenchError> {
    let lists = checked(queries, results)?;
    let hits = queries
        .iter()
        .zip(&lists)
        .filter(|(q, r)| top_k(r, k).iter().any(|id| q.relevant_ids.contains(id)))
        .count();
    Ok(100.0 * hits as f64 / queries.len() as f64)
}

/// Percentage of all annotated ids that some query retrieves in its top `k`.
pub fn coverage(queries: &[BenchmarkQuery], results: &Results, k: usize) -> Result<f64, BenchError> {
    let lists = checked(queries, results)?;
    let mut annotated = BTreeSet::new();
    let mut found = BTreeSet::new();
    for (q, r) in queries.iter().zip(&lists) {
        annotated.extend(q.relevant_ids.iter());
        found.extend(top_k(r, k).iter().filter(|id| q.relevant_ids.contains(*id)));
    }
    Ok(100.0 * found.len() as f64 / annotated.len() as f64)
}

/// Mean NDCG@k with binary relevance.
pub fn ndcg_at_k(queries: &[BenchmarkQuery], results: &Results, k: usize) -> Result<f64, BenchError> {
    let lists = checked(queries, results)?;
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let total: f64 = queries
        .iter()
        .zip(&lists)
        .map(|(q, r)| {
            let dcg: f64 = top_k(r, k)
                .iter()
                .enumerate()
                .filter(|(_, id)| q.relevant_ids.contains(*id))
                .map(|(i, _)| discount(i + 1))
                .sum();
            let ideal: f64 = (1..=k.min(q.relevant_ids.len())).map(discount).sum();
            if ideal == 0.0 {
                0.0
            } else {
                dcg / ideal
            }
        })
        .sum();
    Ok(total / queries.len() as f64)
}
