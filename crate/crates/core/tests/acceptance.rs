//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use hcgs::bench::{self, coverage, ndcg_at_k, pass_at_k, BenchmarkQuery, Relative, Results};
use hcgs::embed::{embed, embed_corpus, flatten_summary, CollectionKind, EmbedInput, EmbeddingRecord, EmbeddingVector, HashEmbedder};
use hcgs::graph::{build_graph, build_levels, CodeEdge, CodeGraph, CodeNode, LevelPlan, NodeKind, Span};
use hcgs::index::Collection;
use hcgs::lsp::extract_graph;
use hcgs::summarize::prompt::{child_header, CYCLE_PLACEHOLDER};
use hcgs::summarize::{process_levels, ExtractiveBackend, ProcessOptions, PromptTemplate, StructuredSummary, SummaryStore};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, elapsed: Duration) -> Result<(), String> {
    check(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn node(id: &str, file: &str, code: String) -> CodeNode {
    CodeNode {
        id: id.to_string(),
        kind: NodeKind::Function,
        name: id.to_string(),
        qualified_name: id.to_string(),
        file_path: file.to_string(),
        span: Span::new(1, 3),
        language: "python".into(),
        code,
    }
}

fn graph_of(n: usize, edges: &[(usize, usize)]) -> CodeGraph {
    let nodes = (0..n).map(|i| node(&format!("f{i:03}"), "m.py", format!("def f{i:03}():\n    pass"))).collect();
    let edges = edges.iter().map(|(a, b)| CodeEdge::call(format!("f{a:03}"), format!("f{b:03}"))).collect();
    build_graph(nodes, edges).unwrap()
}

/// Random DAG: a shuffled order where only later nodes call earlier ones.
fn random_dag(rng: &mut ChaCha8Rng) -> (usize, Vec<(usize, usize)>) {
    let n = rng.random_range(1..=200);
    let density = rng.random_range(0.0..=0.1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(density) {
                edges.push((order[i], order[j]));
            }
        }
    }
    (n, edges)
}

/// Layered Kahn over callee counts: each round takes every node whose
/// callees are all gone.
fn kahn_layers(graph: &CodeGraph) -> Option<Vec<BTreeSet<String>>> {
    let mut pending: BTreeMap<&str, usize> = graph.node_ids().map(|id| (id, graph.callees(id).len())).collect();
    let mut callers: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for id in graph.node_ids() {
        for c in graph.callees(id) {
            callers.entry(c.as_str()).or_default().push(id);
        }
    }
    let mut layers = Vec::new();
    while !pending.is_empty() {
        let ready: Vec<&str> = pending.iter().filter(|(_, n)| **n == 0).map(|(id, _)| *id).collect();
        if ready.is_empty() {
            return None;
        }
        for id in &ready {
            pending.remove(id);
            for caller in callers.get(id).map(Vec::as_slice).unwrap_or_default() {
                if let Some(n) = pending.get_mut(caller) {
                    *n -= 1;
                }
            }
        }
        layers.push(ready.into_iter().map(str::to_string).collect());
    }
    Some(layers)
}

fn edges_respect_levels(graph: &CodeGraph, plan: &LevelPlan, skip_broken: bool) -> Result<(), String> {
    let level = plan.level_of();
    for id in graph.node_ids() {
        for c in graph.callees(id) {
            if skip_broken && plan.is_broken(id, c) {
                continue;
            }
            check(level[c.as_str()] < level[id], || format!("edge {id}->{c} violates level order"))?;
        }
    }
    Ok(())
}

fn covers_once(graph: &CodeGraph, plan: &LevelPlan) -> Result<(), String> {
    let flat: Vec<&String> = plan.levels.iter().flatten().collect();
    let unique: BTreeSet<&str> = flat.iter().map(|s| s.as_str()).collect();
    check(flat.len() == graph.len() && unique.len() == flat.len(), || {
        format!("{} placements for {} nodes ({} unique)", flat.len(), graph.len(), unique.len())
    })?;
    check(unique.iter().all(|id| graph.contains(id)), || "plan names unknown node".into())
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut edges_checked = 0;
    for _ in 0..1000 {
        let (n, edges) = random_dag(&mut rng);
        let g = graph_of(n, &edges);
        let plan = build_levels(&g);
        check(plan.broken_edges.is_empty(), || format!("DAG with {n} nodes got broken edges"))?;
        covers_once(&g, &plan)?;
        edges_respect_levels(&g, &plan, false)?;
        let kahn = kahn_layers(&g).ok_or("Kahn oracle found a cycle in a DAG")?;
        let ours: Vec<BTreeSet<String>> = plan.levels.iter().map(|l| l.iter().cloned().collect()).collect();
        check(ours == kahn, || format!("levels differ from Kahn layering on a {n}-node DAG"))?;
        edges_checked += edges.len();
    }
    let t = start.elapsed();
    within(Duration::from_secs(5), t)?;
    Ok(format!("1000 DAGs, {edges_checked} edges, 0 broken, levels equal Kahn layers ({t:.2?})"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let start = Instant::now();
    let mut broken = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=200);
        let density = rng.random_range(0.0..=0.1);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if a != b && rng.random_bool(density) {
                    edges.push((a, b));
                }
            }
        }
        let len = rng.random_range(2..=n.min(8));
        let mut members: Vec<usize> = (0..n).collect();
        members.shuffle(&mut rng);
        for w in 0..len {
            edges.push((members[w], members[(w + 1) % len]));
        }
        let g = graph_of(n, &edges);
        check(kahn_layers(&g).is_none(), || "generated graph has no cycle".into())?;
        let plan = build_levels(&g);
        covers_once(&g, &plan)?;
        check(!plan.broken_edges.is_empty(), || "cyclic graph leveled without breaking".into())?;
        for (a, b) in &plan.broken_edges {
            check(g.callees(a).contains(b), || format!("broken edge {a}->{b} is not a call edge"))?;
        }
        edges_respect_levels(&g, &plan, true)?;
        broken += plan.broken_edges.len();
    }
    let t = start.elapsed();
    within(Duration::from_secs(5), t)?;
    Ok(format!("200 cyclic digraphs terminate, cover every node once, {broken} broken edges recorded ({t:.2?})"))
}

const WORDS: &[&str] = &[
    "parse", "load", "config", "header", "socket", "buffer", "cache", "token", "index", "vector", "graph", "level",
    "render", "table", "file", "path", "query", "score", "retry", "stream",
];

fn fifty_node_fixture() -> CodeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut nodes = Vec::new();
    for i in 0..50 {
        let doc: Vec<&str> = (0..6).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
        let id = format!("mod{}.py::fn_{i:02}@{}", i % 5, i + 1);
        let mut n = node(&id, &format!("mod{}.py", i % 5), format!("def fn_{i:02}(a, b):\n    \"\"\"{}.\"\"\"\n    return a", doc.join(" ")));
        n.name = format!("fn_{i:02}");
        nodes.push(n);
    }
    let ids: Vec<String> = nodes.iter().map(|n| n.id.clone()).collect();
    let mut edges = Vec::new();
    for a in 0..50 {
        for b in 0..50 {
            if a != b && rng.random_bool(0.06) {
                edges.push(CodeEdge::call(&ids[a], &ids[b]));
            }
        }
    }
    build_graph(nodes, edges).unwrap()
}

fn criterion_3() -> Outcome {
    let g = fifty_node_fixture();
    let plan = build_levels(&g);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut outputs = Vec::new();
    for workers in [1, 4, 16] {
        for run in 0..3 {
            let store = SummaryStore::new(dir.path().join(format!("w{workers}_r{run}.jsonl")));
            process_levels(&plan, &g, &PromptTemplate::default(), &ExtractiveBackend, ProcessOptions { workers, store: Some(&store) })
                .map_err(|e| e.to_string())?;
            outputs.push(((workers, run), std::fs::read(store.path()).map_err(|e| e.to_string())?));
        }
    }
    let t = start.elapsed();
    let reference = &outputs[0].1;
    for ((w, r), bytes) in &outputs {
        check(bytes == reference, || format!("workers={w} run={r} differs from workers=1 run=0"))?;
    }
    check(reference.iter().filter(|b| **b == b'\n').count() == 50, || "expected 50 summaries".into())?;
    within(Duration::from_secs(10), t)?;
    Ok(format!(
        "9 runs (workers 1/4/16 x3) byte-identical, {} bytes, {} levels, {} broken edges ({t:.2?})",
        reference.len(),
        plan.levels.len(),
        plan.broken_edges.len()
    ))
}

fn mini_corpus_graph() -> Result<CodeGraph, String> {
    let config = common::stub_config(&common::corpus_root(), &common::corpus_script());
    extract_graph(&config, "**/*.py", 4).map(|e| e.graph).map_err(|e| e.to_string())
}

fn criterion_4() -> Outcome {
    let g = mini_corpus_graph()?.callable_subgraph();
    let plan = build_levels(&g);
    let run = process_levels(&plan, &g, &PromptTemplate::default(), &ExtractiveBackend, ProcessOptions::default())
        .map_err(|e| e.to_string())?;
    let (mut plain, mut broken) = (0, 0);
    let mut cycle_edge = false;
    for a in g.node_ids() {
        let prompt = &run.prompts[a];
        for b in g.callees(a) {
            if plan.is_broken(a, b) {
                let line = format!("- {}: {CYCLE_PLACEHOLDER}", g.node(b).unwrap().name);
                check(prompt.contains(&line), || format!("prompt for {a} lacks placeholder for {b}"))?;
                cycle_edge |= g.callees(b).contains(&a.to_string());
                broken += 1;
            } else {
                let header = child_header(run.cache.get(b).ok_or(format!("{b} has no summary"))?);
                check(prompt.contains(&header), || format!("prompt for {a} lacks header of {b}"))?;
                plain += 1;
            }
        }
    }
    check(cycle_edge, || "no broken edge lies on the 2-cycle".into())?;
    Ok(format!("{plain}/{plain} non-broken edges carry the callee header; {broken} broken edges carry the placeholder"))
}

fn brute_force(queries: &[BenchmarkQuery], results: &Results, k: usize) -> (f64, f64, f64) {
    let mut passed = 0usize;
    let mut annotated: Vec<&String> = Vec::new();
    let mut found: Vec<&String> = Vec::new();
    let mut ndcg_sum = 0.0;
    for q in queries {
        let list = &results[&q.query_id];
        let mut hit = false;
        let mut dcg = 0.0;
        for (i, id) in list.iter().enumerate() {
            if i >= k {
                break;
            }
            if q.relevant_ids.iter().any(|r| r == id) {
                hit = true;
                dcg += 1.0 / ((i + 2) as f64).log2();
                if !found.contains(&id) {
                    found.push(id);
                }
            }
        }
        if hit {
            passed += 1;
        }
        for r in &q.relevant_ids {
            if !annotated.contains(&r) {
                annotated.push(r);
            }
        }
        let mut idcg = 0.0;
        let mut i = 0;
        while i < k && i < q.relevant_ids.len() {
            idcg += 1.0 / ((i + 2) as f64).log2();
            i += 1;
        }
        ndcg_sum += if idcg > 0.0 { dcg / idcg } else { 0.0 };
    }
    (
        100.0 * passed as f64 / queries.len() as f64,
        100.0 * found.len() as f64 / annotated.len() as f64,
        ndcg_sum / queries.len() as f64,
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let start = Instant::now();
    let mut comparisons = 0;
    for _ in 0..50 {
        let items = rng.random_range(1..=50);
        let nq = rng.random_range(1..=20);
        let mut queries = Vec::new();
        let mut results = Results::new();
        for q in 0..nq {
            let rel_count = rng.random_range(1..=3.min(items));
            let relevant: BTreeSet<String> = (0..rel_count).map(|_| format!("n{}", rng.random_range(0..items))).collect();
            let mut ranked: Vec<String> = (0..items).map(|i| format!("n{i}")).collect();
            ranked.shuffle(&mut rng);
            ranked.truncate(rng.random_range(0..=items));
            let id = format!("q{q}");
            queries.push(BenchmarkQuery {
                query_id: id.clone(),
                text: "q".into(),
                origin_node_id: relevant.iter().next().unwrap().clone(),
                relevant_ids: relevant,
            });
            results.insert(id, ranked);
        }
        for k in [1, 3, 5, 10, 50] {
            let (p, c, n) = brute_force(&queries, &results, k);
            let ours = (
                pass_at_k(&queries, &results, k).map_err(|e| e.to_string())?,
                coverage(&queries, &results, k).map_err(|e| e.to_string())?,
                ndcg_at_k(&queries, &results, k).map_err(|e| e.to_string())?,
            );
            check(ours.0 == p && ours.1 == c, || format!("k={k}: pass/coverage {:?} vs oracle {:?}", (ours.0, ours.1), (p, c)))?;
            check((ours.2 - n).abs() <= 1e-9, || format!("k={k}: ndcg {} vs oracle {n}", ours.2))?;
            comparisons += 1;
        }
    }
    let t = start.elapsed();
    within(Duration::from_secs(2), t)?;
    Ok(format!("50 fixtures x {} cutoffs agree with the brute-force oracle ({t:.2?})", comparisons / 50))
}

/// `(name, [(code, summary); Pass@1, @3, @10], [(abs, rel); ...])`.
type Row = (&'static str, [(f64, f64); 3], [(f64, i64); 3]);

const REFERENCE_ROWS: [Row; 5] = [
    ("libsignal", [(33.07, 60.21), (51.63, 80.80), (69.41, 92.03)], [(27.15, 82), (29.16, 56), (22.63, 33)]),
    ("ingress-nginx", [(33.73, 59.27), (51.66, 81.04), (67.50, 92.59)], [(25.55, 76), (29.38, 57), (25.09, 37)]),
    ("awesome-llm-apps", [(68.12, 77.11), (89.10, 94.55), (98.64, 99.46)], [(8.99, 13), (5.45, 6), (0.82, 1)]),
    ("newsnow", [(60.78, 72.22), (85.62, 92.81), (95.42, 98.04)], [(11.44, 19), (7.19, 8), (2.61, 3)]),
    ("DeepSeek-V3", [(73.53, 82.35), (94.12, 100.00), (97.06, 100.00)], [(8.82, 12), (5.88, 6), (2.94, 3)]),
];

fn criterion_6() -> Outcome {
    let mut worst = (0.0f64, 0i64);
    for (name, absolutes, expected) in REFERENCE_ROWS {
        for ((code, summary), (abs, rel)) in absolutes.into_iter().zip(expected) {
            let got = bench::improvement(code, summary);
            let Relative::Percent(r) = got.relative else {
                return Err(format!("{name}: relative undefined"));
            };
            let d_abs = (got.absolute - abs).abs();
            let d_rel = (r - rel).abs();
            check(d_abs <= 0.01 + 1e-9 && d_rel <= 1, || {
                format!("{name} {code}->{summary}: got +{:.2}/{r}%, expected +{abs:.2}/{rel}%", got.absolute)
            })?;
            worst = (worst.0.max(d_abs), worst.1.max(d_rel));
        }
    }
    Ok(format!("15/15 improvement cells reproduced; max deviation {:.2} pp, {} % rel", worst.0, worst.1))
}

fn criterion_7() -> Outcome {
    const D: usize = 384;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let unit = |rng: &mut ChaCha8Rng| {
        let raw: Vec<f64> = (0..D).map(|_| rng.random_range(-1.0..1.0)).collect();
        EmbeddingVector::normalized(&raw)
    };
    let mut corpus = Collection::new(CollectionKind::Summary, D);
    let mut vectors: Vec<(String, EmbeddingVector)> = Vec::new();
    for i in 0..500 {
        // Every tenth record duplicates an earlier vector to exercise tie-breaks.
        let v = if i % 10 == 9 { vectors[i - 5].1.clone() } else { unit(&mut rng) };
        let id = format!("node-{:03}", (i * 7919) % 1000);
        vectors.push((id.clone(), v.clone()));
        corpus
            .upsert(
                EmbeddingRecord {
                    node_id: id,
                    collection: CollectionKind::Summary,
                    vector: v,
                    text_digest: String::new(),
                },
                None,
            )
            .map_err(|e| e.to_string())?;
    }
    let queries: Vec<EmbeddingVector> = (0..1000)
        .map(|i| if i % 25 == 0 { vectors[i % 500].1.clone() } else { unit(&mut rng) })
        .collect();

    let start = Instant::now();
    let mut tie_queries = 0;
    for q in &queries {
        let mut full: Vec<(f64, &str)> = vectors.iter().map(|(id, v)| (q.dot(v), id.as_str())).collect();
        full.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        if full.windows(2).take(10).any(|w| w[0].0 == w[1].0) {
            tie_queries += 1;
        }
        for k in [1, 3, 5, 10] {
            let hits = corpus.search(q, k).map_err(|e| e.to_string())?;
            let got: Vec<(f64, &str, usize)> = hits.iter().map(|h| (h.score, h.node_id.as_str(), h.rank)).collect();
            let want: Vec<(f64, &str, usize)> = full[..k].iter().enumerate().map(|(i, (s, id))| (*s, *id, i + 1)).collect();
            check(got == want, || format!("k={k}: {got:?} != {want:?}"))?;
        }
    }
    let t = start.elapsed();
    within(Duration::from_secs(5), t)?;
    Ok(format!("1000 queries x k in {{1,3,5,10}} equal full-sort oracle, {tie_queries} with score ties ({t:.2?})"))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let graph = mini_corpus_graph()?;
    let callable = graph.callable_subgraph();
    let plan = build_levels(&callable);
    let run = process_levels(&plan, &callable, &PromptTemplate::default(), &ExtractiveBackend, ProcessOptions { workers: 4, store: None })
        .map_err(|e| e.to_string())?;
    let summaries: Vec<&StructuredSummary> = run.cache.iter().collect();
    let mut inputs = Vec::new();
    for s in &summaries {
        inputs.push(EmbedInput::new(&s.node_id, CollectionKind::Code, &graph.node(&s.node_id).unwrap().code));
        inputs.push(EmbedInput::new(&s.node_id, CollectionKind::Summary, flatten_summary(s)));
    }
    let hash = HashEmbedder::new(384);
    let corpus = embed_corpus(&inputs, &hash, 4).map_err(|e| e.to_string())?;
    let mut code = Collection::new(CollectionKind::Code, 384);
    let mut summary = Collection::new(CollectionKind::Summary, 384);
    for r in corpus.records {
        let target = if r.collection == CollectionKind::Code { &mut code } else { &mut summary };
        target.upsert(r, None).map_err(|e| e.to_string())?;
    }
    let set = bench::generate_queries(&summaries, &ExtractiveBackend, 2, 4).map_err(|e| e.to_string())?;
    let report = bench::run_benchmark(&graph, &code, &summary, &set.queries, &bench::DEFAULT_KS, &hash, 4).map_err(|e| e.to_string())?;
    for (label, m) in [("code", &report.code), ("summary", &report.summary)] {
        let p = |k: usize| m.pass_at[&k];
        check(p(1) <= p(3) && p(3) <= p(10), || format!("{label}: Pass@1/3/10 = {}/{}/{}", p(1), p(3), p(10)))?;
    }
    check(report.validate().is_empty(), || format!("{:?}", report.validate()))?;
    for s in &summaries {
        let v = embed(&flatten_summary(s), &hash).map_err(|e| e.to_string())?;
        let top = summary.search(&v, 1).map_err(|e| e.to_string())?;
        check(top[0].node_id == s.node_id, || format!("flattened summary of {} retrieves {}", s.node_id, top[0].node_id))?;
    }
    let t = start.elapsed();
    within(Duration::from_secs(30), t)?;
    Ok(format!(
        "{} functions, {} queries; Pass@1/3/10 code {:.2}/{:.2}/{:.2}, summary {:.2}/{:.2}/{:.2}; all {} flattened summaries retrieve themselves at rank 1 ({t:.2?})",
        summaries.len(),
        report.queries,
        report.code.pass_at[&1],
        report.code.pass_at[&3],
        report.code.pass_at[&10],
        report.summary.pass_at[&1],
        report.summary.pass_at[&3],
        report.summary.pass_at[&10],
        summaries.len()
    ))
}

fn criterion_9() -> Outcome {
    Ok("NOTE: retrieval gains on large real-world repositories depend on a production LLM and those \
        repositories; they are not reproduced at desk scale. Criteria 1-8 stand in with property, oracle and \
        arithmetic checks."
        .into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("level plan on random DAGs", criterion_1),
        ("cycle termination and broken-edge record", criterion_2),
        ("determinism under parallelism", criterion_3),
        ("bottom-up context propagation", criterion_4),
        ("metric oracle equivalence", criterion_5),
        ("improvement arithmetic on reference figures", criterion_6),
        ("retrieval exactness", criterion_7),
        ("end-to-end desk-scale run", criterion_8),
        ("non-reproducibility note", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS  criterion {}: {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL  criterion {}: {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL  criterion {}: {name}: panicked", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
