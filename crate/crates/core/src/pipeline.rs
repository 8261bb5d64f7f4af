//! The five commands of the `hcgs` binary, as library functions.
//!
//! Every command reads its inputs from the paths in [`RunConfig`], checks that
//! the artifacts of earlier commands exist, and writes its own outputs
//! atomically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use serde_json::Value;

use crate::bench::{self, queries_from_jsonl, queries_to_jsonl, MetricsReport};
use crate::embed::{embed_corpus, flatten_summary, CollectionKind, EmbedInput, Embedder, HashEmbedder, HttpEmbedder, DEFAULT_DIMENSION};
use crate::graph::{build_levels, graph_to_json, json_to_graph, CodeGraph};
use crate::index::{export_json, Collection, NodeMeta};
use crate::lsp::{extract_graph, LspServerConfig};
use crate::query::{answer, QueryAnswer, QueryRequest};
use crate::summarize::{
    modules_to_jsonl, process_levels, summarize_modules, ExtractiveBackend, Generator, HttpLlmBackend, LlmEndpoint,
    ProcessOptions, PromptTemplate, ReplayBackend, StructuredSummary, SummaryCache, SummaryStore,
};
use crate::util::write_atomic;

pub const TOKEN_ENV: &str = "HCGS_LLM_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Llm,
    Extractive,
    Replay,
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "llm" => Ok(Self::Llm),
            "extractive" => Ok(Self::Extractive),
            "replay" => Ok(Self::Replay),
            other => Err(format!("unknown backend `{other}` (expected llm, extractive or replay)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedBackendKind {
    Http,
    Hash,
}

impl FromStr for EmbedBackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "http" => Ok(Self::Http),
            "hash" => Ok(Self::Hash),
            other => Err(format!("unknown embed backend `{other}` (expected http or hash)")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    pub launch_command: Vec<String>,
    #[serde(default)]
    pub initialization_options: Value,
    #[serde(default = "default_request_timeout")]
    pub request_timeout: f64,
}

fn default_request_timeout() -> f64 {
    30.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSettings {
    pub url: String,
    #[serde(default)]
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_http_timeout")]
    pub timeout: f64,
    /// May be `${VAR}`; resolved from the environment, never persisted.
    #[serde(default)]
    pub token: Option<String>,
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_http_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSettings {
    pub url: String,
    #[serde(default = "default_http_timeout")]
    pub timeout: f64,
}

/// Output paths; relative entries resolve against `out_dir`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub graph: PathBuf,
    pub summaries: PathBuf,
    pub modules: PathBuf,
    pub code_index: PathBuf,
    pub summary_index: PathBuf,
    pub queries: PathBuf,
    pub report_json: PathBuf,
    pub report_txt: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            graph: "graph.json".into(),
            summaries: "summaries.jsonl".into(),
            modules: "modules.jsonl".into(),
            code_index: "code.idx".into(),
            summary_index: "summary.idx".into(),
            queries: "queries.jsonl".into(),
            report_json: "report.json".into(),
            report_txt: "report.txt".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub project_root: PathBuf,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default = "default_glob")]
    pub file_glob: String,
    /// Launch configs keyed by language tag.
    #[serde(default)]
    pub language_servers: BTreeMap<String, ServerEntry>,
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default = "default_embed_backend")]
    pub embed_backend: EmbedBackendKind,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_per_function")]
    pub per_function: usize,
    #[serde(default = "default_ks")]
    pub ks: Vec<usize>,
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default)]
    pub replay_path: Option<PathBuf>,
    #[serde(default)]
    pub llm: Option<LlmSettings>,
    #[serde(default)]
    pub embed: Option<EmbedSettings>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub paths: Paths,
}

fn default_language() -> String {
    "python".into()
}
fn default_glob() -> String {
    "**/*.py".into()
}
fn default_backend() -> BackendKind {
    BackendKind::Extractive
}
fn default_embed_backend() -> EmbedBackendKind {
    EmbedBackendKind::Hash
}
fn default_workers() -> usize {
    4
}
fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}
fn default_per_function() -> usize {
    1
}
fn default_ks() -> Vec<usize> {
    bench::DEFAULT_KS.to_vec()
}
fn default_out_dir() -> PathBuf {
    "out".into()
}

/// Replaces a whole-value `${NAME}` with the environment variable `NAME`.
fn interpolate_secret(value: &str) -> Result<String> {
    match value.strip_prefix("${").and_then(|v| v.strip_suffix('}')) {
        Some(name) => std::env::var(name).with_context(|| format!("environment variable {name} is not set")),
        None => Ok(value.to_string()),
    }
}

impl RunConfig {
    /// Defaults rooted at `project_root`, as used when no config file is given.
    pub fn for_project(project_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            project_root: project_root.into(),
            language: default_language(),
            file_glob: default_glob(),
            language_servers: BTreeMap::new(),
            backend: default_backend(),
            embed_backend: default_embed_backend(),
            workers: default_workers(),
            dimension: default_dimension(),
            per_function: default_per_function(),
            ks: default_ks(),
            prompt_template: None,
            replay_path: None,
            llm: None,
            embed: None,
            out_dir: out_dir.into(),
            paths: Paths::default(),
        }
    }

    /// Parses a JSON config. Relative paths in it resolve against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = serde_json::from_str(text).context("parsing config")?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut c.project_root);
        rebase(&mut c.out_dir);
        if let Some(p) = c.prompt_template.as_mut() {
            rebase(p);
        }
        if let Some(p) = c.replay_path.as_mut() {
            rebase(p);
        }
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.dimension == 0 {
            bail!("dimension must be positive");
        }
        if self.per_function == 0 {
            bail!("per_function must be at least 1");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            bail!("ks must be non-empty and positive");
        }
        let all = self.all_paths();
        let distinct: BTreeSet<&PathBuf> = all.iter().collect();
        if distinct.len() != all.len() {
            bail!("output paths must be distinct");
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn all_paths(&self) -> Vec<PathBuf> {
        let p = &self.paths;
        [
            &p.graph,
            &p.summaries,
            &p.modules,
            &p.code_index,
            &p.summary_index,
            &p.queries,
            &p.report_json,
            &p.report_txt,
        ]
        .into_iter()
        .map(|x| self.resolve(x))
        .collect()
    }

    pub fn graph_path(&self) -> PathBuf {
        self.resolve(&self.paths.graph)
    }
    pub fn summaries_path(&self) -> PathBuf {
        self.resolve(&self.paths.summaries)
    }
    pub fn modules_path(&self) -> PathBuf {
        self.resolve(&self.paths.modules)
    }
    pub fn index_path(&self, kind: CollectionKind) -> PathBuf {
        match kind {
            CollectionKind::Code => self.resolve(&self.paths.code_index),
            CollectionKind::Summary => self.resolve(&self.paths.summary_index),
        }
    }
    pub fn queries_path(&self) -> PathBuf {
        self.resolve(&self.paths.queries)
    }
    pub fn report_paths(&self) -> (PathBuf, PathBuf) {
        (self.resolve(&self.paths.report_json), self.resolve(&self.paths.report_txt))
    }

    pub fn server_config(&self) -> Result<LspServerConfig> {
        let entry = self
            .language_servers
            .get(&self.language)
            .with_context(|| format!("no language server configured for `{}`", self.language))?;
        Ok(LspServerConfig {
            language: self.language.clone(),
            launch_command: entry.launch_command.clone(),
            root_path: self.project_root.clone(),
            initialization_options: entry.initialization_options.clone(),
            request_timeout: entry.request_timeout,
        })
    }

    pub fn generator(&self) -> Result<Box<dyn Generator>> {
        Ok(match self.backend {
            BackendKind::Extractive => Box::new(ExtractiveBackend),
            BackendKind::Replay => {
                let path = self.replay_path.as_ref().context("backend `replay` needs `replay_path` in the config")?;
                Box::new(ReplayBackend::from_file(path)?)
            }
            BackendKind::Llm => {
                let llm = self.llm.as_ref().context("backend `llm` needs an `llm` section in the config")?;
                let token = match &llm.token {
                    Some(t) => Some(interpolate_secret(t)?),
                    None => std::env::var(TOKEN_ENV).ok(),
                };
                Box::new(HttpLlmBackend::new(LlmEndpoint {
                    url: llm.url.clone(),
                    model: llm.model.clone(),
                    max_tokens: llm.max_tokens,
                    timeout: Duration::from_secs_f64(llm.timeout),
                    token,
                }))
            }
        })
    }

    pub fn embedder(&self) -> Result<Box<dyn Embedder>> {
        Ok(match self.embed_backend {
            EmbedBackendKind::Hash => Box::new(HashEmbedder::new(self.dimension)),
            EmbedBackendKind::Http => {
                let e = self.embed.as_ref().context("embed backend `http` needs an `embed` section in the config")?;
                Box::new(HttpEmbedder::new(&e.url, self.dimension, Duration::from_secs_f64(e.timeout)))
            }
        })
    }

    pub fn template(&self) -> Result<PromptTemplate> {
        match &self.prompt_template {
            None => Ok(PromptTemplate::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading prompt template {}", p.display()))?;
                Ok(PromptTemplate::parse(&text)?)
            }
        }
    }
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} is missing; run `hcgs {producer}` first", path.display());
    }
    Ok(())
}

pub fn read_graph(config: &RunConfig) -> Result<CodeGraph> {
    let path = config.graph_path();
    require(&path, "index")?;
    let bytes = std::fs::read(&path)?;
    json_to_graph(&bytes).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_summaries(config: &RunConfig) -> Result<SummaryCache> {
    let path = config.summaries_path();
    require(&path, "summarize")?;
    Ok(SummaryStore::new(path).read()?)
}

pub fn read_collection(config: &RunConfig, kind: CollectionKind) -> Result<Collection> {
    let path = config.index_path(kind);
    require(&path, "embed")?;
    Collection::load(&path).with_context(|| format!("loading {}", path.display()))
}

/// Extracts the graph through the language server, or imports `from_graph`.
pub fn cmd_index(config: &RunConfig, from_graph: Option<&Path>) -> Result<PathBuf> {
    let graph = match from_graph {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            json_to_graph(&bytes).with_context(|| format!("parsing {}", p.display()))?
        }
        None => {
            let ex = extract_graph(&config.server_config()?, &config.file_glob, config.workers)?;
            for (file, err) in &ex.report.file_failures {
                log::warn!("{file}: {err}");
            }
            for (symbol, err) in &ex.report.symbol_failures {
                log::warn!("{symbol}: {err}");
            }
            ex.graph
        }
    };
    let out = config.graph_path();
    write_atomic(&out, &graph_to_json(&graph))?;
    log::info!("wrote {} nodes, {} edges to {}", graph.len(), graph.edges().len(), out.display());
    Ok(out)
}

/// Levels the function subgraph, summarizes it bottom-up, then writes module
/// overviews.
pub fn cmd_summarize(config: &RunConfig) -> Result<PathBuf> {
    let graph = read_graph(config)?;
    let callable = graph.callable_subgraph();
    let plan = build_levels(&callable);
    log::info!(
        "{} functions in {} levels, {} broken edges",
        plan.node_count(),
        plan.levels.len(),
        plan.broken_edges.len()
    );
    let backend = config.generator()?;
    let store = SummaryStore::new(config.summaries_path());
    let run = process_levels(
        &plan,
        &callable,
        &config.template()?,
        backend.as_ref(),
        ProcessOptions {
            workers: config.workers,
            store: Some(&store),
        },
    )?;
    if !run.degraded.is_empty() {
        log::warn!("{} summaries are degraded", run.degraded.len());
    }
    let modules = summarize_modules(&run.modules, &run.cache, &graph, backend.as_ref(), config.workers)?;
    write_atomic(&config.modules_path(), &modules_to_jsonl(&modules))?;
    Ok(store.path().to_path_buf())
}

fn sorted_summaries(cache: &SummaryCache) -> Vec<&StructuredSummary> {
    cache.iter().collect()
}

/// Embeds each summarized function's raw code and flattened summary into the
/// two collections.
pub fn cmd_embed(config: &RunConfig, export: Option<&Path>) -> Result<(PathBuf, PathBuf)> {
    let graph = read_graph(config)?;
    let cache = read_summaries(config)?;
    let mut inputs = Vec::with_capacity(cache.len() * 2);
    for s in sorted_summaries(&cache) {
        let node = graph
            .node(&s.node_id)
            .with_context(|| format!("summary for {} has no node in the graph; rerun `hcgs summarize`", s.node_id))?;
        inputs.push(EmbedInput::new(&s.node_id, CollectionKind::Code, &node.code));
        inputs.push(EmbedInput::new(&s.node_id, CollectionKind::Summary, flatten_summary(s)));
    }
    let embedder = config.embedder()?;
    let corpus = embed_corpus(&inputs, embedder.as_ref(), config.workers)?;
    for (id, kind, err) in &corpus.failures {
        log::warn!("embedding {kind} text of {id} failed: {err}");
    }
    let mut code = Collection::new(CollectionKind::Code, config.dimension);
    let mut summary = Collection::new(CollectionKind::Summary, config.dimension);
    for record in corpus.records {
        let meta = graph.node(&record.node_id).map(NodeMeta::from);
        match record.collection {
            CollectionKind::Code => code.upsert(record, meta)?,
            CollectionKind::Summary => summary.upsert(record, meta)?,
        }
    }
    let (code_path, summary_path) = (config.index_path(CollectionKind::Code), config.index_path(CollectionKind::Summary));
    code.persist(&code_path)?;
    summary.persist(&summary_path)?;
    if let Some(p) = export {
        let doc = serde_json::json!({"code": export_json(&code), "summary": export_json(&summary)});
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        write_atomic(p, &bytes)?;
    }
    Ok((code_path, summary_path))
}

pub fn cmd_query(config: &RunConfig, request: &QueryRequest) -> Result<(QueryAnswer, Collection)> {
    let graph = read_graph(config)?;
    let collection = read_collection(config, request.collection)?;
    let embedder = config.embedder()?;
    let a = answer(request, &graph, &[&collection], embedder.as_ref())?;
    Ok((a, collection))
}

/// Generates queries (reusing an existing query file), evaluates both
/// collections and writes the report. Fails if the report violates a metric
/// invariant.
pub fn cmd_bench(config: &RunConfig) -> Result<MetricsReport> {
    let graph = read_graph(config)?;
    let cache = read_summaries(config)?;
    let code = read_collection(config, CollectionKind::Code)?;
    let summary = read_collection(config, CollectionKind::Summary)?;

    let queries_path = config.queries_path();
    let queries = if queries_path.exists() {
        queries_from_jsonl(&std::fs::read_to_string(&queries_path)?)?
    } else {
        let backend = config.generator()?;
        let set = bench::generate_queries(&sorted_summaries(&cache), backend.as_ref(), config.per_function, config.workers)?;
        for w in &set.warnings {
            log::warn!("{w}");
        }
        write_atomic(&queries_path, &queries_to_jsonl(&set.queries))?;
        set.queries
    };

    let embedder = config.embedder()?;
    let report = bench::run_benchmark(&graph, &code, &summary, &queries, &config.ks, embedder.as_ref(), config.workers)?;
    let (json_path, txt_path) = config.report_paths();
    write_atomic(&json_path, &report.to_json())?;
    write_atomic(&txt_path, report.to_table().as_bytes())?;
    let problems = report.validate();
    if !problems.is_empty() {
        bail!("metric invariants violated:\n  {}", problems.join("\n  "));
    }
    Ok(report)
}
