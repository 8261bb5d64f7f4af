//! Scriptable stand-in for a language server, driven by a JSON script.
//!
//! ```text
//! hcgs-stub-lsp SCRIPT.json
//! ```
//!
//! Script keys (all optional):
//!
//! * `capabilities`: replaces the advertised server capabilities.
//! * `call_hierarchy`: `false` hides `callHierarchyProvider`, forcing clients
//!   onto the references route.
//! * `silent`: never answer `initialize`.
//! * `malformed_on`: method name; the reply to it is a frame whose body is
//!   not JSON.
//! * `files`: map from root-relative path to either `{"symbols": [...]}`
//!   (DocumentSymbol objects) or `{"error": {"code": .., "message": ..}}`.
//! * `calls`: list of `{"from": P, "to": P, "site": P}` where each `P` is
//!   `{"file", "line", "character"}`. `from`/`to` point inside the selection
//!   range of the caller and callee; `site` is the call location. A `to` in a
//!   file outside the root models an external callee.

use std::io::{self, BufReader, Write};
use std::path::PathBuf;

use hcgs::lsp::framing::{read_message, write_message};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Debug, Deserialize)]
struct Point {
    file: String,
    line: u32,
    character: u32,
}

#[derive(Debug, Deserialize)]
struct Call {
    from: Point,
    to: Point,
    site: Point,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct Script {
    capabilities: Option<Value>,
    call_hierarchy: Option<bool>,
    silent: bool,
    malformed_on: Option<String>,
    files: serde_json::Map<String, Value>,
    calls: Vec<Call>,
}

struct Stub {
    script: Script,
    root: String,
}

fn pos(v: &Value) -> (u64, u64) {
    (v["line"].as_u64().unwrap_or(0), v["character"].as_u64().unwrap_or(0))
}

fn in_range(range: &Value, p: (u64, u64)) -> bool {
    pos(&range["start"]) <= p && p <= pos(&range["end"])
}

impl Stub {
    fn uri(&self, file: &str) -> String {
        if file.starts_with('/') {
            format!("file://{file}")
        } else {
            format!("{}/{file}", self.root)
        }
    }

    fn file_of(&self, uri: &str) -> String {
        uri.strip_prefix(&self.root)
            .map(|r| r.trim_start_matches('/').to_string())
            .unwrap_or_else(|| uri.to_string())
    }

    /// Flattened `(symbol, file)` pairs across all scripted files.
    fn symbols(&self) -> Vec<(&Value, &str)> {
        fn walk<'a>(items: &'a [Value], file: &'a str, out: &mut Vec<(&'a Value, &'a str)>) {
            for s in items {
                out.push((s, file));
                if let Some(c) = s["children"].as_array() {
                    walk(c, file, out);
                }
            }
        }
        let mut out = Vec::new();
        for (file, entry) in &self.script.files {
            if let Some(items) = entry["symbols"].as_array() {
                walk(items, file, &mut out);
            }
        }
        out
    }

    fn symbol_at(&self, file: &str, p: (u64, u64)) -> Option<&Value> {
        self.symbols()
            .into_iter()
            .find(|(s, f)| *f == file && in_range(&s["selectionRange"], p))
            .map(|(s, _)| s)
    }

    fn item(&self, symbol: &Value, file: &str) -> Value {
        json!({
            "name": symbol["name"],
            "kind": symbol["kind"],
            "uri": self.uri(file),
            "range": symbol["range"],
            "selectionRange": symbol["selectionRange"],
        })
    }

    fn point_range(p: &Point) -> Value {
        json!({
            "start": {"line": p.line, "character": p.character},
            "end": {"line": p.line, "character": p.character + 1},
        })
    }

    fn capabilities(&self) -> Value {
        let mut caps = self.script.capabilities.clone().unwrap_or_else(|| {
            json!({
                "documentSymbolProvider": true,
                "referencesProvider": true,
                "callHierarchyProvider": true,
                "textDocumentSync": 1,
            })
        });
        if self.script.call_hierarchy == Some(false) {
            if let Some(obj) = caps.as_object_mut() {
                obj.remove("callHierarchyProvider");
            }
        }
        caps
    }

    fn handle(&mut self, method: &str, params: &Value) -> Result<Value, (i64, String)> {
        match method {
            "initialize" => {
                if let Some(root) = params["rootUri"].as_str() {
                    self.root = root.trim_end_matches('/').to_string();
                }
                Ok(json!({"capabilities": self.capabilities(), "serverInfo": {"name": "hcgs-stub-lsp"}}))
            }
            "shutdown" => Ok(Value::Null),
            "textDocument/documentSymbol" => {
                let file = self.file_of(params["textDocument"]["uri"].as_str().unwrap_or(""));
                match self.script.files.get(&file) {
                    None => Ok(json!([])),
                    Some(entry) => match entry.get("error") {
                        Some(e) => Err((e["code"].as_i64().unwrap_or(-32603), e["message"].as_str().unwrap_or("error").to_string())),
                        None => Ok(entry.get("symbols").cloned().unwrap_or(json!([]))),
                    },
                }
            }
            "textDocument/prepareCallHierarchy" => {
                let file = self.file_of(params["textDocument"]["uri"].as_str().unwrap_or(""));
                Ok(match self.symbol_at(&file, pos(&params["position"])) {
                    Some(s) => json!([self.item(s, &file)]),
                    None => Value::Null,
                })
            }
            "callHierarchy/outgoingCalls" => {
                let item = &params["item"];
                let file = self.file_of(item["uri"].as_str().unwrap_or(""));
                let mut grouped: Vec<(Value, Vec<Value>)> = Vec::new();
                for c in &self.script.calls {
                    if c.from.file != file || !in_range(&item["selectionRange"], (c.from.line.into(), c.from.character.into())) {
                        continue;
                    }
                    let target = match self.symbol_at(&c.to.file, (c.to.line.into(), c.to.character.into())) {
                        Some(s) => self.item(s, &c.to.file),
                        None => json!({
                            "name": "external",
                            "kind": 12,
                            "uri": self.uri(&c.to.file),
                            "range": Self::point_range(&c.to),
                            "selectionRange": Self::point_range(&c.to),
                        }),
                    };
                    let site = Self::point_range(&c.site);
                    match grouped.iter_mut().find(|(t, _)| *t == target) {
                        Some((_, sites)) => sites.push(site),
                        None => grouped.push((target, vec![site])),
                    }
                }
                Ok(Value::Array(
                    grouped.into_iter().map(|(to, from_ranges)| json!({"to": to, "fromRanges": from_ranges})).collect(),
                ))
            }
            "textDocument/references" => {
                let file = self.file_of(params["textDocument"]["uri"].as_str().unwrap_or(""));
                let Some(target) = self.symbol_at(&file, pos(&params["position"])) else {
                    return Ok(json!([]));
                };
                let sel = target["selectionRange"].clone();
                let locations: Vec<Value> = self
                    .script
                    .calls
                    .iter()
                    .filter(|c| c.to.file == file && in_range(&sel, (c.to.line.into(), c.to.character.into())))
                    .map(|c| json!({"uri": self.uri(&c.site.file), "range": Self::point_range(&c.site)}))
                    .collect();
                Ok(Value::Array(locations))
            }
            other => Err((-32601, format!("method not found: {other}"))),
        }
    }
}

fn main() -> io::Result<()> {
    let path: PathBuf = std::env::args_os().nth(1).map(PathBuf::from).unwrap_or_default();
    let script: Script = match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes).map_err(io::Error::other)?,
        Err(_) if path.as_os_str().is_empty() => Script::default(),
        Err(e) => return Err(e),
    };
    let mut stub = Stub {
        script,
        root: String::from("file://"),
    };
    let mut input = BufReader::new(io::stdin().lock());
    let mut out = io::stdout().lock();
    while let Ok(Some(msg)) = read_message(&mut input) {
        let method = msg["method"].as_str().unwrap_or("").to_string();
        if method == "exit" {
            break;
        }
        let Some(id) = msg.get("id").cloned() else {
            continue;
        };
        if method.is_empty() || (method == "initialize" && stub.script.silent) {
            continue;
        }
        if stub.script.malformed_on.as_deref() == Some(method.as_str()) {
            out.write_all(b"Content-Length: 9\r\n\r\nnot json!")?;
            out.flush()?;
            continue;
        }
        let reply = match stub.handle(&method, &msg["params"]) {
            Ok(result) => json!({"jsonrpc": "2.0", "id": id, "result": result}),
            Err((code, message)) => json!({"jsonrpc": "2.0", "id": id, "error": {"code": code, "message": message}}),
        };
        write_message(&mut out, &reply)?;
    }
    Ok(())
}
