//! Text generation backends.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

use super::prompt::{
    between, CODE_CLOSE, CODE_OPEN, CONDENSED_CLOSE, CONDENSED_OPEN, CONTEXT_CLOSE, CONTEXT_OPEN, CYCLE_PLACEHOLDER,
    DETAILS_CLOSE, DETAILS_OPEN, FUNCTIONS_CLOSE, FUNCTIONS_OPEN, NO_CHILD_CONTEXT, SUMMARY_CLOSE, SUMMARY_OPEN,
};
use super::schema::first_sentence;
use crate::http::{JsonClient, RetryPolicy};
use crate::util::sha256_hex;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("generation backend unavailable: {0}")]
    Unavailable(String),
}

/// Prompt-in, text-out generation.
pub trait Generator: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, BackendError>;

    /// Backends that cannot take concurrent calls return true; callers then
    /// serialize access.
    fn single_flight(&self) -> bool {
        false
    }
}

/// Serializes calls into a single-flight backend, passes others through.
pub(crate) struct Gate<'a> {
    inner: &'a dyn Generator,
    lock: Option<Mutex<()>>,
}

impl<'a> Gate<'a> {
    pub fn new(inner: &'a dyn Generator) -> Self {
        let lock = inner.single_flight().then(|| Mutex::new(()));
        Self { inner, lock }
    }

    pub fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let _guard = self.lock.as_ref().map(|m| m.lock().unwrap_or_else(|p| p.into_inner()));
        self.inner.generate(prompt)
    }
}

/// Deterministic backend computed from the prompt text alone.
///
/// It recognizes the prompts this crate builds by their section markers:
///
/// * **module** (`<<<FUNCTIONS`): `Module <file> defines <n1>, <n2>. <d1> <d2>`
///   over the listed `(name, details)` lines.
/// * **condense** (`<<<SUMMARY`): the summary's `purpose`.
/// * **queries** (`<<<CONDENSED`): for `Count: N`, query `i` is the first ten
///   words of source `i mod len`, where the sources are the condensed text
///   followed by each sentence of the details block. One query per line.
/// * **node summary** (anything else): reads `Function:`/`File:` lines, the
///   `<<<CODE` block and the `<<<CONTEXT` block, and answers a fenced JSON
///   summary. The purpose is the first comment line of the code with its
///   comment markers removed, or `Function <name> in <file>` when the code has
///   none. Details repeat the purpose and, when there are child lines, append
///   `; relies on <child>: <child purpose>, ...`. Dependencies are the child
///   names in context order.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveBackend;

const COMMENT_PREFIXES: [&str; 9] = ["///", "//!", "/**", "//", "--", "\"\"\"", "'''", "# ", "* "];

/// First comment line of `code`, stripped of comment syntax.
pub fn first_doc_line(code: &str) -> Option<String> {
    for line in code.lines() {
        let t = line.trim();
        if t == "#" || t.starts_with("#!") || t.starts_with("#[") {
            continue;
        }
        if let Some(prefix) = COMMENT_PREFIXES.iter().find(|p| t.starts_with(**p)) {
            let body = t[prefix.len()..]
                .trim()
                .trim_end_matches("*/")
                .trim_end_matches("\"\"\"")
                .trim_end_matches("'''")
                .trim();
            if !body.is_empty() {
                return Some(body.to_string());
            }
        }
    }
    None
}

fn labelled<'a>(prompt: &'a str, label: &str) -> Option<&'a str> {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(label))
        .map(str::trim)
}

/// Parameter names from the first line of `code` that has parentheses.
fn parameter_names(code: &str) -> Vec<String> {
    let Some(line) = code.lines().find(|l| l.contains('(')) else {
        return Vec::new();
    };
    let open = line.find('(').unwrap();
    let inner = match line[open + 1..].rfind(')') {
        Some(close) => &line[open + 1..open + 1 + close],
        None => &line[open + 1..],
    };
    inner
        .split(',')
        .filter_map(|p| {
            let p = p.split(['=', ':']).next()?.trim();
            let name = p.split_whitespace().last()?.trim_start_matches(['*', '&']);
            (!name.is_empty() && name != "self" && name != "cls").then(|| name.to_string())
        })
        .collect()
}

/// `(name, text after the colon)` for each `- name: text` line.
fn dash_lines(block: &str) -> Vec<(&str, &str)> {
    block
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .filter_map(|l| l.split_once(": "))
        .collect()
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text.trim();
    while !rest.is_empty() {
        let s = first_sentence(rest);
        if s.is_empty() {
            break;
        }
        out.push(s);
        let consumed = rest.find(s).map(|i| i + s.len()).unwrap_or(rest.len());
        rest = rest[consumed..].trim_start();
    }
    out
}

pub(crate) fn first_words(text: &str, n: usize) -> String {
    text.split_whitespace().take(n).collect::<Vec<_>>().join(" ")
}

impl ExtractiveBackend {
    fn node_summary(prompt: &str) -> String {
        let name = labelled(prompt, "Function:").unwrap_or("unknown");
        let file = labelled(prompt, "File:").unwrap_or("unknown");
        let code = between(prompt, CODE_OPEN, CODE_CLOSE).unwrap_or("");
        let context = between(prompt, CONTEXT_OPEN, CONTEXT_CLOSE).unwrap_or(NO_CHILD_CONTEXT);

        let purpose = first_doc_line(code).unwrap_or_else(|| format!("Function {name} in {file}"));
        let children: Vec<(&str, &str)> = dash_lines(context)
            .into_iter()
            .map(|(n, rest)| {
                let role = if rest == CYCLE_PLACEHOLDER {
                    "summary unavailable (cycle)"
                } else {
                    rest.split(" | ").next().unwrap_or(rest)
                };
                (n, role)
            })
            .collect();
        let details = if children.is_empty() {
            purpose.clone()
        } else {
            let list: Vec<String> = children.iter().map(|(n, r)| format!("{n}: {r}")).collect();
            format!("{purpose}; relies on {}", list.join(", "))
        };
        let outputs = if code.contains("return ") {
            format!("return value of {name}")
        } else {
            "none".to_string()
        };
        let reply = json!({
            "purpose": purpose,
            "details": details,
            "inputs": parameter_names(code)
                .into_iter()
                .map(|p| json!({"name": p, "description": format!("parameter {p}")}))
                .collect::<Vec<_>>(),
            "outputs": outputs,
            "side_effects": "none",
            "dependencies": children
                .iter()
                .map(|(n, r)| json!({"name": n, "role": r}))
                .collect::<Vec<_>>(),
        });
        format!("```json\n{}\n```", serde_json::to_string_pretty(&reply).expect("json"))
    }

    fn module_overview(prompt: &str) -> String {
        let file = labelled(prompt, "Module:").unwrap_or("unknown");
        let funcs = dash_lines(between(prompt, FUNCTIONS_OPEN, FUNCTIONS_CLOSE).unwrap_or(""));
        let names: Vec<&str> = funcs.iter().map(|(n, _)| *n).collect();
        let details: Vec<&str> = funcs.iter().map(|(_, d)| *d).collect();
        format!("Module {file} defines {}. {}", names.join(", "), details.join(" "))
            .trim_end()
            .to_string()
    }

    fn condense(prompt: &str) -> String {
        between(prompt, SUMMARY_OPEN, SUMMARY_CLOSE)
            .and_then(|b| serde_json::from_str::<Value>(b).ok())
            .and_then(|v| v["purpose"].as_str().map(str::to_string))
            .unwrap_or_default()
    }

    fn queries(prompt: &str) -> String {
        let count: usize = labelled(prompt, "Count:").and_then(|c| c.parse().ok()).unwrap_or(1);
        let condensed = between(prompt, CONDENSED_OPEN, CONDENSED_CLOSE).unwrap_or("");
        let details = between(prompt, DETAILS_OPEN, DETAILS_CLOSE).unwrap_or("");
        let mut sources: Vec<&str> = vec![condensed];
        sources.extend(sentences(details));
        sources.retain(|s| !s.trim().is_empty());
        if sources.is_empty() {
            return String::new();
        }
        (0..count)
            .map(|i| first_words(sources[i % sources.len()], 10))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Generator for ExtractiveBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        Ok(if prompt.contains(FUNCTIONS_OPEN) {
            Self::module_overview(prompt)
        } else if prompt.contains(SUMMARY_OPEN) {
            Self::condense(prompt)
        } else if prompt.contains(CONDENSED_OPEN) {
            Self::queries(prompt)
        } else {
            Self::node_summary(prompt)
        })
    }
}

/// Canned responses keyed by the SHA-256 hex digest of the prompt.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    responses: BTreeMap<String, String>,
}

impl ReplayBackend {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        Self { responses }
    }

    /// Loads a JSON object mapping prompt digests to responses.
    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Unavailable(format!("replay file {}: {e}", path.display())))?;
        let responses = serde_json::from_str(&text)
            .map_err(|e| BackendError::Unavailable(format!("replay file {}: {e}", path.display())))?;
        Ok(Self { responses })
    }

    pub fn prompt_key(prompt: &str) -> String {
        sha256_hex(prompt)
    }

    pub fn insert(&mut self, prompt: &str, response: impl Into<String>) {
        self.responses.insert(Self::prompt_key(prompt), response.into());
    }
}

impl Generator for ReplayBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let key = Self::prompt_key(prompt);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| BackendError::Unavailable(format!("no recorded response for prompt {key}")))
    }
}

#[derive(Debug, Clone)]
pub struct LlmEndpoint {
    pub url: String,
    pub model: String,
    pub max_tokens: u32,
    pub timeout: Duration,
    /// Bearer token, held in memory only.
    pub token: Option<String>,
}

/// Remote completion endpoint: `POST {"model", "prompt", "max_tokens"}`,
/// reading the reply's `text` field. Three attempts with jittered
/// exponential backoff.
pub struct HttpLlmBackend {
    endpoint: LlmEndpoint,
    client: JsonClient,
}

impl HttpLlmBackend {
    pub fn new(endpoint: LlmEndpoint) -> Self {
        let client = JsonClient::new(endpoint.timeout, endpoint.token.clone(), RetryPolicy::default());
        Self { endpoint, client }
    }

    pub fn with_retry_delay(mut self, base_delay: Duration) -> Self {
        self.client = JsonClient::new(
            self.endpoint.timeout,
            self.endpoint.token.clone(),
            RetryPolicy {
                attempts: 3,
                base_delay,
            },
        );
        self
    }

    fn reply_text(v: &Value) -> Option<&str> {
        v["text"]
            .as_str()
            .or_else(|| v["choices"][0]["text"].as_str())
            .or_else(|| v["content"][0]["text"].as_str())
    }
}

impl Generator for HttpLlmBackend {
    fn generate(&self, prompt: &str) -> Result<String, BackendError> {
        let body = json!({
            "model": self.endpoint.model,
            "prompt": prompt,
            "max_tokens": self.endpoint.max_tokens,
        });
        let reply = self.client.post(&self.endpoint.url, &body).map_err(BackendError::Unavailable)?;
        Self::reply_text(&reply)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Unavailable("reply has no text field".into()))
    }
}
