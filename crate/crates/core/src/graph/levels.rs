//! Dependency-level decomposition of the call graph.
//!
//! Every level holds nodes whose in-graph callees all sit in earlier levels.
//! When no node is ready the graph has a cycle among the remaining nodes; the
//! node with the fewest unprocessed callees (smallest id on ties) is placed in
//! a level of its own and its still-pending callee edges are recorded as
//! broken.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Adjacency, CodeGraph};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LevelPlan {
    pub levels: Vec<Vec<String>>,
    /// `(caller, callee)` pairs whose ordering constraint was waived.
    pub broken_edges: Vec<(String, String)>,
}

impl LevelPlan {
    /// Level index of every node.
    pub fn level_of(&self) -> BTreeMap<&str, usize> {
        self.levels
            .iter()
            .enumerate()
            .flat_map(|(i, level)| level.iter().map(move |id| (id.as_str(), i)))
            .collect()
    }

    pub fn node_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_broken(&self, from: &str, to: &str) -> bool {
        self.broken_edges.iter().any(|(f, t)| f == from && t == to)
    }
}

/// True when no callee of `id` is still waiting in `remaining`.
///
/// Callees that are not graph nodes never appear in `remaining` and so count
/// as processed, as do self-calls.
pub fn all_deps_processed(id: &str, adjacency: &Adjacency, remaining: &BTreeSet<String>) -> bool {
    adjacency
        .get(id)
        .map(|callees| callees.iter().all(|c| c == id || !remaining.contains(c)))
        .unwrap_or(true)
}

/// Picks the node to place next when every remaining node is blocked.
///
/// Returns the node with the fewest callees still in `remaining`, breaking
/// ties by the lexicographically smallest id. `remaining` must be non-empty.
pub fn break_cycle(remaining: &BTreeSet<String>, adjacency: &Adjacency) -> String {
    remaining
        .iter()
        .map(|id| (unprocessed_callees(id, adjacency, remaining).count(), id))
        .min()
        .map(|(_, id)| id.clone())
        .expect("break_cycle needs a non-empty remaining set")
}

fn unprocessed_callees<'a>(
    id: &'a str,
    adjacency: &'a Adjacency,
    remaining: &'a BTreeSet<String>,
) -> impl Iterator<Item = &'a String> + 'a {
    adjacency
        .get(id)
        .into_iter()
        .flatten()
        .filter(move |c| c.as_str() != id && remaining.contains(*c))
}

/// Builds the level plan for every node of `graph`, leveling on call edges.
pub fn build_levels(graph: &CodeGraph) -> LevelPlan {
    build_levels_from_adjacency(graph.adjacency())
}

/// Level construction over an adjacency map whose keys are the node set.
///
/// Runs in `O(V + E)` plus an `O(V)` scan per cycle break: pending-callee
/// counters replace the repeated `all_deps_processed` scans, with identical
/// results.
pub(crate) fn build_levels_from_adjacency(adjacency: &Adjacency) -> LevelPlan {
    let ids: Vec<&String> = adjacency.keys().collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();

    let mut callees: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    let mut callers: Vec<Vec<usize>> = vec![Vec::new(); ids.len()];
    for (i, id) in ids.iter().enumerate() {
        let mut targets: Vec<usize> = adjacency[*id]
            .iter()
            .filter_map(|c| index.get(c.as_str()).copied())
            .filter(|&c| c != i)
            .collect();
        targets.sort_unstable();
        targets.dedup();
        for &t in &targets {
            callers[t].push(i);
        }
        callees[i] = targets;
    }

    let mut pending: Vec<usize> = callees.iter().map(Vec::len).collect();
    let mut remaining = vec![true; ids.len()];
    let mut left = ids.len();
    let mut ready: BTreeSet<usize> = (0..ids.len()).filter(|&i| pending[i] == 0).collect();
    let mut plan = LevelPlan::default();

    while left > 0 {
        let level: Vec<usize> = if ready.is_empty() {
            let pick = (0..ids.len())
                .filter(|&i| remaining[i])
                .min_by_key(|&i| (pending[i], i))
                .expect("nodes remain");
            for &c in &callees[pick] {
                if remaining[c] {
                    plan.broken_edges.push((ids[pick].clone(), ids[c].clone()));
                }
            }
            vec![pick]
        } else {
            std::mem::take(&mut ready).into_iter().collect()
        };

        for &n in &level {
            remaining[n] = false;
            left -= 1;
        }
        for &n in &level {
            for &caller in &callers[n] {
                if remaining[caller] {
                    pending[caller] -= 1;
                    if pending[caller] == 0 {
                        ready.insert(caller);
                    }
                }
            }
        }
        plan.levels.push(level.into_iter().map(|i| ids[i].clone()).collect());
    }
    plan
}
