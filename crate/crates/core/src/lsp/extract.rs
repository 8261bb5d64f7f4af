use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use globset::Glob;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use walkdir::WalkDir;

use super::session::{path_to_uri, start_session, uri_to_path, LspError, LspServerConfig, Session};
use crate::exec::{self, Exec};
use crate::graph::{build_graph, CodeEdge, CodeGraph, CodeNode, EdgeKind, GraphError, NodeKind, Span};

pub const SYMBOL_CLASS: u32 = 5;
pub const SYMBOL_METHOD: u32 = 6;
pub const SYMBOL_CONSTRUCTOR: u32 = 9;
pub const SYMBOL_FUNCTION: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub character: u32,
}

/// Zero-based, end-exclusive range as sent by the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Range {
    pub start: Position,
    pub end: Position,
}

impl Range {
    pub fn contains(&self, p: Position) -> bool {
        self.start <= p && p <= self.end
    }

    pub fn encloses(&self, other: &Range) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Inclusive one-based line span.
    pub fn lines(&self) -> Span {
        Span::new(self.start.line + 1, self.end.line.max(self.start.line) + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolRecord {
    pub name: String,
    pub qualified_name: String,
    /// LSP SymbolKind.
    pub kind: u32,
    /// Relative to the project root, `/`-separated.
    pub file_path: String,
    pub span: Range,
    pub selection_span: Range,
}

impl SymbolRecord {
    pub fn node_kind(&self) -> Option<NodeKind> {
        match self.kind {
            SYMBOL_FUNCTION => Some(NodeKind::Function),
            SYMBOL_METHOD | SYMBOL_CONSTRUCTOR => Some(NodeKind::Method),
            SYMBOL_CLASS => Some(NodeKind::Class),
            _ => None,
        }
    }

    pub fn is_callable(&self) -> bool {
        self.node_kind().is_some_and(NodeKind::is_callable)
    }

    pub fn node_id(&self) -> String {
        format!("{}::{}@{}", self.file_path, self.qualified_name, self.span.start.line + 1)
    }
}

fn parse_range(v: &Value) -> Result<Range, LspError> {
    serde_json::from_value(v.clone()).map_err(|e| LspError::ProtocolError(format!("bad range {v}: {e}")))
}

fn flatten_document_symbols(items: &[Value], parent: Option<&str>, file: &str, out: &mut Vec<SymbolRecord>) -> Result<(), LspError> {
    for item in items {
        let name = item["name"].as_str().ok_or_else(|| LspError::ProtocolError("symbol without name".into()))?;
        let qualified = match parent {
            Some(p) => format!("{p}::{name}"),
            None => name.to_string(),
        };
        let span = parse_range(&item["range"])?;
        let selection = parse_range(&item["selectionRange"])?;
        let kind = item["kind"].as_u64().unwrap_or(0) as u32;
        if span.start > span.end || !span.encloses(&selection) {
            log::warn!("{file}: dropping symbol {qualified} with malformed ranges");
        } else if matches!(kind, SYMBOL_CLASS | SYMBOL_METHOD | SYMBOL_CONSTRUCTOR | SYMBOL_FUNCTION) {
            out.push(SymbolRecord {
                name: name.to_string(),
                qualified_name: qualified.clone(),
                kind,
                file_path: file.to_string(),
                span,
                selection_span: selection,
            });
        }
        if let Some(children) = item.get("children").and_then(Value::as_array) {
            flatten_document_symbols(children, Some(&qualified), file, out)?;
        }
    }
    Ok(())
}

fn flatten_symbol_information(items: &[Value], file: &str, out: &mut Vec<SymbolRecord>) -> Result<(), LspError> {
    for item in items {
        let name = item["name"].as_str().ok_or_else(|| LspError::ProtocolError("symbol without name".into()))?;
        let kind = item["kind"].as_u64().unwrap_or(0) as u32;
        if !matches!(kind, SYMBOL_CLASS | SYMBOL_METHOD | SYMBOL_CONSTRUCTOR | SYMBOL_FUNCTION) {
            continue;
        }
        let span = parse_range(&item["location"]["range"])?;
        let qualified = match item.get("containerName").and_then(Value::as_str) {
            Some(c) if !c.is_empty() => format!("{}::{name}", c.replace('.', "::")),
            _ => name.to_string(),
        };
        out.push(SymbolRecord {
            name: name.to_string(),
            qualified_name: qualified,
            kind,
            file_path: file.to_string(),
            span,
            selection_span: span,
        });
    }
    Ok(())
}

/// Parses a documentSymbol reply, hierarchical or flat, into records in
/// document order.
pub fn parse_document_symbols(result: &Value, file: &str) -> Result<Vec<SymbolRecord>, LspError> {
    let items = match result {
        Value::Null => return Ok(Vec::new()),
        Value::Array(items) => items,
        other => return Err(LspError::ProtocolError(format!("documentSymbol returned {other}"))),
    };
    let mut out = Vec::new();
    if items.iter().any(|i| i.get("location").is_some()) {
        flatten_symbol_information(items, file, &mut out)?;
    } else {
        flatten_document_symbols(items, None, file, &mut out)?;
    }
    out.sort_by_key(|s| (s.span.start, std::cmp::Reverse(s.span.end)));
    Ok(out)
}

fn relative_path(root: &Path, path: &Path) -> Option<String> {
    let rel = path.strip_prefix(root).ok()?;
    Some(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"))
}

pub fn extract_symbols(session: &Session, file_path: &str) -> Result<Vec<SymbolRecord>, LspError> {
    let uri = path_to_uri(&session.root().join(file_path))?;
    let result = session.request("textDocument/documentSymbol", json!({"textDocument": {"uri": uri}}))?;
    parse_document_symbols(&result, file_path)
}

/// Known symbols by file, for resolving server locations back to nodes.
struct SymbolTable<'a> {
    by_file: BTreeMap<&'a str, Vec<&'a SymbolRecord>>,
}

impl<'a> SymbolTable<'a> {
    fn new(symbols: &'a [SymbolRecord]) -> Self {
        let mut by_file: BTreeMap<&str, Vec<&SymbolRecord>> = BTreeMap::new();
        for s in symbols {
            by_file.entry(&s.file_path).or_default().push(s);
        }
        Self { by_file }
    }

    /// The innermost callable symbol of `file` whose range contains `at`.
    fn enclosing(&self, file: &str, at: Position) -> Option<&'a SymbolRecord> {
        self.by_file
            .get(file)?
            .iter()
            .filter(|s| s.is_callable() && s.span.contains(at))
            .min_by_key(|s| (s.span.end.line - s.span.start.line, std::cmp::Reverse(s.span.start)))
            .copied()
    }

    /// The symbol a call hierarchy item refers to.
    fn resolve_item(&self, file: &str, range: &Range, selection: &Range) -> Option<&'a SymbolRecord> {
        let candidates = self.by_file.get(file)?;
        candidates
            .iter()
            .find(|s| s.selection_span.start == selection.start && s.is_callable())
            .or_else(|| candidates.iter().find(|s| s.span == *range && s.is_callable()))
            .copied()
            .or_else(|| self.enclosing(file, selection.start))
    }
}

#[derive(Debug, Default)]
pub struct CallExtraction {
    /// Sorted and deduplicated.
    pub edges: Vec<CodeEdge>,
    /// `(symbol id, error)` for symbols whose calls could not be resolved.
    pub failures: Vec<(String, String)>,
}

fn location_file(session: &Session, uri: &str) -> Option<String> {
    relative_path(session.root(), &uri_to_path(uri)?)
}

fn outgoing_via_hierarchy(session: &Session, table: &SymbolTable<'_>, symbol: &SymbolRecord) -> Result<Vec<CodeEdge>, LspError> {
    let uri = path_to_uri(&session.root().join(&symbol.file_path))?;
    let items = session.request(
        "textDocument/prepareCallHierarchy",
        json!({"textDocument": {"uri": uri}, "position": symbol.selection_span.start}),
    )?;
    let Some(item) = items.as_array().and_then(|a| a.first()) else {
        return Ok(Vec::new());
    };
    let calls = session.request("callHierarchy/outgoingCalls", json!({"item": item}))?;
    let mut edges = Vec::new();
    for call in calls.as_array().map(Vec::as_slice).unwrap_or_default() {
        let to = &call["to"];
        let Some(file) = to["uri"].as_str().and_then(|u| location_file(session, u)) else {
            continue;
        };
        let (Ok(range), Ok(selection)) = (parse_range(&to["range"]), parse_range(&to["selectionRange"])) else {
            continue;
        };
        if let Some(target) = table.resolve_item(&file, &range, &selection) {
            edges.push(CodeEdge::call(symbol.node_id(), target.node_id()));
        }
    }
    Ok(edges)
}

/// Callers of `target`: every reference site mapped to its enclosing function.
fn incoming_via_references(session: &Session, table: &SymbolTable<'_>, target: &SymbolRecord) -> Result<Vec<CodeEdge>, LspError> {
    let uri = path_to_uri(&session.root().join(&target.file_path))?;
    let refs = session.request(
        "textDocument/references",
        json!({
            "textDocument": {"uri": uri},
            "position": target.selection_span.start,
            "context": {"includeDeclaration": false},
        }),
    )?;
    let mut edges = Vec::new();
    for loc in refs.as_array().map(Vec::as_slice).unwrap_or_default() {
        let Some(file) = loc["uri"].as_str().and_then(|u| location_file(session, u)) else {
            continue;
        };
        let Ok(range) = parse_range(&loc["range"]) else {
            continue;
        };
        if file == target.file_path && target.selection_span.contains(range.start) {
            continue;
        }
        if let Some(caller) = table.enclosing(&file, range.start) {
            edges.push(CodeEdge::call(caller.node_id(), target.node_id()));
        }
    }
    Ok(edges)
}

/// Resolves call edges among `symbols`. Uses the call hierarchy when the
/// server offers it, otherwise references. Targets outside `symbols` are
/// dropped; per-symbol failures are collected, not fatal.
pub fn extract_call_edges(session: &Session, symbols: &[SymbolRecord], workers: usize) -> CallExtraction {
    let table = SymbolTable::new(symbols);
    let callables: Vec<&SymbolRecord> = symbols.iter().filter(|s| s.is_callable()).collect();
    let hierarchy = session.supports_call_hierarchy();
    let results = exec::map(Exec::workers(workers), &callables, |s| {
        if hierarchy {
            outgoing_via_hierarchy(session, &table, s)
        } else {
            incoming_via_references(session, &table, s)
        }
    });
    let mut edges = BTreeSet::new();
    let mut out = CallExtraction::default();
    for (s, r) in callables.iter().zip(results) {
        match r {
            Ok(found) => edges.extend(found),
            Err(e) => {
                log::warn!("call resolution for {} failed: {e}", s.node_id());
                out.failures.push((s.node_id(), e.to_string()));
            }
        }
    }
    out.edges = edges.into_iter().collect();
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("no files under {root} match `{glob}`")]
    NoFiles { root: String, glob: String },
    #[error("invalid file glob: {0}")]
    BadGlob(String),
    #[error("every file failed to parse; first: {0}")]
    AllFilesFailed(String),
    #[error(transparent)]
    Lsp(#[from] LspError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct ExtractionReport {
    pub files: Vec<String>,
    pub file_failures: Vec<(String, String)>,
    pub symbol_failures: Vec<(String, String)>,
    pub skipped_symbols: Vec<String>,
}

#[derive(Debug)]
pub struct Extraction {
    pub graph: CodeGraph,
    pub report: ExtractionReport,
}

fn matching_files(root: &Path, pattern: &str) -> Result<Vec<String>, ExtractError> {
    let glob = Glob::new(pattern).map_err(|e| ExtractError::BadGlob(e.to_string()))?.compile_matcher();
    let mut files: Vec<String> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter_map(|e| relative_path(root, e.path()))
        .filter(|rel| glob.is_match(rel))
        .collect();
    files.sort();
    Ok(files)
}

fn slice_lines(text: &str, span: Span) -> String {
    text.lines()
        .skip(span.start_line as usize - 1)
        .take(span.len() as usize)
        .collect::<Vec<_>>()
        .join("\n")
}

fn module_node(file: &str, text: &str, language: &str) -> CodeNode {
    CodeNode {
        id: file.to_string(),
        kind: NodeKind::Module,
        name: file.rsplit('/').next().unwrap_or(file).to_string(),
        qualified_name: file.to_string(),
        file_path: file.to_string(),
        span: Span::new(1, text.lines().count().max(1) as u32),
        language: language.to_string(),
        code: text.to_string(),
    }
}

/// Runs the whole extraction: files matching `file_glob` under the project
/// root, their symbols, the calls between them, and one module node per file
/// with import edges for cross-file calls.
pub fn extract_graph(config: &LspServerConfig, file_glob: &str, workers: usize) -> Result<Extraction, ExtractError> {
    let root = std::path::absolute(&config.root_path)
        .map_err(|e| LspError::InvalidConfig(format!("root path {}: {e}", config.root_path.display())))?;
    let files = matching_files(&root, file_glob)?;
    if files.is_empty() {
        return Err(ExtractError::NoFiles {
            root: root.display().to_string(),
            glob: file_glob.to_string(),
        });
    }
    let session = start_session(config)?;
    let result = extract_with(&session, &files, &config.language, workers);
    session.shutdown();
    result
}

fn extract_with(session: &Session, files: &[String], language: &str, workers: usize) -> Result<Extraction, ExtractError> {
    let mut report = ExtractionReport::default();
    let per_file = exec::map(Exec::workers(workers), files, |file| -> Result<(String, Vec<SymbolRecord>), LspError> {
        let path = session.root().join(file);
        let text = std::fs::read_to_string(&path).map_err(|e| LspError::ProtocolError(format!("reading {file}: {e}")))?;
        session.did_open(&path_to_uri(&path)?, language, &text)?;
        Ok((text, extract_symbols(session, file)?))
    });

    let mut texts = BTreeMap::new();
    let mut symbols = Vec::new();
    for (file, result) in files.iter().zip(per_file) {
        match result {
            Ok((text, syms)) => {
                report.files.push(file.clone());
                texts.insert(file.clone(), text);
                symbols.extend(syms);
            }
            Err(e) => {
                log::warn!("skipping {file}: {e}");
                report.file_failures.push((file.clone(), e.to_string()));
            }
        }
    }
    if report.files.is_empty() {
        let first = report.file_failures.first().map(|(f, e)| format!("{f}: {e}")).unwrap_or_default();
        return Err(ExtractError::AllFilesFailed(first));
    }

    let mut seen = BTreeSet::new();
    symbols.retain(|s| {
        let fresh = seen.insert(s.node_id());
        if !fresh {
            report.skipped_symbols.push(s.node_id());
        }
        fresh
    });

    let mut nodes: Vec<CodeNode> = Vec::new();
    for (file, text) in &texts {
        nodes.push(module_node(file, text, language));
    }
    let mut kept = Vec::new();
    for s in symbols {
        let span = s.span.lines();
        let code = slice_lines(&texts[&s.file_path], span);
        let kind = s.node_kind().expect("filtered at parse");
        if kind.is_callable() && code.trim().is_empty() {
            report.skipped_symbols.push(s.node_id());
            continue;
        }
        nodes.push(CodeNode {
            id: s.node_id(),
            kind,
            name: s.name.clone(),
            qualified_name: s.qualified_name.clone(),
            file_path: s.file_path.clone(),
            span,
            language: language.to_string(),
            code,
        });
        kept.push(s);
    }

    let calls = extract_call_edges(session, &kept, workers);
    report.symbol_failures = calls.failures;
    let file_of: BTreeMap<String, &str> = kept.iter().map(|s| (s.node_id(), s.file_path.as_str())).collect();
    let mut edges = calls.edges;
    let imports: BTreeSet<(&str, &str)> = edges
        .iter()
        .map(|e| (file_of[&e.from], file_of[&e.to]))
        .filter(|(a, b)| a != b)
        .collect();
    edges.extend(imports.into_iter().map(|(a, b)| CodeEdge::new(a, b, EdgeKind::Import)));

    Ok(Extraction {
        graph: build_graph(nodes, edges)?,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn range(sl: u32, sc: u32, el: u32, ec: u32) -> Value {
        json!({"start": {"line": sl, "character": sc}, "end": {"line": el, "character": ec}})
    }

    #[test]
    fn flattens_nested_document_symbols() {
        let result = json!([
            {"name": "C", "kind": 5, "range": range(0, 0, 5, 0), "selectionRange": range(0, 6, 0, 7), "children": [
                {"name": "m", "kind": 6, "range": range(1, 4, 3, 0), "selectionRange": range(1, 8, 1, 9)},
                {"name": "x", "kind": 13, "range": range(4, 4, 4, 9), "selectionRange": range(4, 4, 4, 5)}
            ]},
            {"name": "f", "kind": 12, "range": range(7, 0, 8, 0), "selectionRange": range(7, 4, 7, 5)}
        ]);
        let syms = parse_document_symbols(&result, "a.py").unwrap();
        let names: Vec<&str> = syms.iter().map(|s| s.qualified_name.as_str()).collect();
        assert_eq!(names, ["C", "C::m", "f"]);
        assert_eq!(syms[1].node_id(), "a.py::C::m@2");
        assert_eq!(syms[1].node_kind(), Some(NodeKind::Method));
        assert_eq!(syms[2].span.lines(), Span::new(8, 9));
    }

    #[test]
    fn one_function_and_empty_file() {
        let result = json!([{"name": "f", "kind": 12, "range": range(0, 0, 1, 0), "selectionRange": range(0, 4, 0, 5)}]);
        let syms = parse_document_symbols(&result, "f.py").unwrap();
        assert_eq!(syms.len(), 1);
        assert_eq!((syms[0].name.as_str(), syms[0].kind), ("f", 12));
        assert!(parse_document_symbols(&json!([]), "e.py").unwrap().is_empty());
        assert!(parse_document_symbols(&Value::Null, "e.py").unwrap().is_empty());
    }

    #[test]
    fn flat_symbol_information() {
        let result = json!([
            {"name": "m", "kind": 6, "containerName": "C", "location": {"uri": "file:///r/a.py", "range": range(1, 0, 2, 0)}},
            {"name": "C", "kind": 5, "location": {"uri": "file:///r/a.py", "range": range(0, 0, 2, 0)}}
        ]);
        let names: Vec<String> = parse_document_symbols(&result, "a.py").unwrap().into_iter().map(|s| s.qualified_name).collect();
        assert_eq!(names, ["C", "C::m"]);
    }

    #[test]
    fn malformed_selection_dropped() {
        let result = json!([{"name": "f", "kind": 12, "range": range(3, 0, 4, 0), "selectionRange": range(0, 0, 0, 1)}]);
        assert!(parse_document_symbols(&result, "a.py").unwrap().is_empty());
        assert!(parse_document_symbols(&json!({"x": 1}), "a.py").is_err());
    }

    #[test]
    fn enclosing_picks_innermost() {
        let result = json!([
            {"name": "C", "kind": 5, "range": range(0, 0, 9, 0), "selectionRange": range(0, 6, 0, 7), "children": [
                {"name": "outer", "kind": 6, "range": range(1, 0, 8, 0), "selectionRange": range(1, 4, 1, 9), "children": [
                    {"name": "inner", "kind": 12, "range": range(2, 0, 4, 0), "selectionRange": range(2, 4, 2, 9)}
                ]}
            ]}
        ]);
        let syms = parse_document_symbols(&result, "a.py").unwrap();
        let t = SymbolTable::new(&syms);
        assert_eq!(t.enclosing("a.py", Position { line: 3, character: 2 }).unwrap().name, "inner");
        assert_eq!(t.enclosing("a.py", Position { line: 6, character: 0 }).unwrap().name, "outer");
        assert!(t.enclosing("a.py", Position { line: 9, character: 0 }).is_none());
    }

    #[test]
    fn code_slicing() {
        assert_eq!(slice_lines("a\nb\nc\nd", Span::new(2, 3)), "b\nc");
        assert_eq!(slice_lines("a\nb", Span::new(2, 9)), "b");
    }
}
