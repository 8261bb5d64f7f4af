mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use common::*;
use hcgs::graph::{graph_to_json, EdgeKind, NodeKind};
use hcgs::lsp::{extract_graph, extract_symbols, start_session, ExtractError, LspError, LspServerConfig};
use serde_json::json;

fn range(sl: u32, sc: u32, el: u32, ec: u32) -> serde_json::Value {
    json!({"start": {"line": sl, "character": sc}, "end": {"line": el, "character": ec}})
}

fn func(name: &str, line: u32, end: u32) -> serde_json::Value {
    json!({"name": name, "kind": 12, "range": range(line, 0, end, 20), "selectionRange": range(line, 4, line, 4 + name.len() as u32)})
}

fn at(file: &str, line: u32, character: u32) -> serde_json::Value {
    json!({"file": file, "line": line, "character": character})
}

/// Two files, three functions, two calls plus an external one.
fn two_file_project(dir: &std::path::Path, patch: impl FnOnce(&mut serde_json::Value)) -> LspServerConfig {
    let root = dir.join("proj");
    std::fs::create_dir_all(&root).unwrap();
    std::fs::write(root.join("a.py"), "def f():\n    g()\n    printf()\n\ndef h():\n    return 1\n").unwrap();
    std::fs::write(root.join("b.py"), "def g():\n    h()\n").unwrap();
    std::fs::write(root.join("notes.txt"), "ignored\n").unwrap();
    let mut script = json!({
        "files": {
            "a.py": {"symbols": [func("f", 0, 2), func("h", 4, 5)]},
            "b.py": {"symbols": [func("g", 0, 1)]},
        },
        "calls": [
            {"from": at("a.py", 0, 4), "to": at("b.py", 0, 4), "site": at("a.py", 1, 4)},
            {"from": at("a.py", 0, 4), "to": at("b.py", 0, 4), "site": at("a.py", 1, 4)},
            {"from": at("a.py", 0, 4), "to": at("/usr/include/stdio.h", 10, 0), "site": at("a.py", 2, 4)},
            {"from": at("b.py", 0, 4), "to": at("a.py", 4, 4), "site": at("b.py", 1, 4)},
        ],
    });
    patch(&mut script);
    let script_path = dir.join("script.json");
    std::fs::write(&script_path, serde_json::to_vec(&script).unwrap()).unwrap();
    stub_config(&root, &script_path)
}

#[test]
fn handshake_records_capabilities() {
    let dir = tempfile::tempdir().unwrap();
    let session = start_session(&two_file_project(dir.path(), |_| {})).unwrap();
    assert_eq!(session.capabilities()["documentSymbolProvider"], json!(true));
    assert!(session.supports_call_hierarchy());
    let syms = extract_symbols(&session, "a.py").unwrap();
    assert_eq!(syms.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(), ["f", "h"]);
    assert_eq!(syms[0].kind, 12);
    assert!(extract_symbols(&session, "missing.py").unwrap().is_empty());
    session.shutdown();
}

#[test]
fn missing_command_is_spawn_failure() {
    let c = LspServerConfig::new("python", vec!["/nonexistent/hcgs-no-such-server".into()], "/");
    assert!(matches!(start_session(&c), Err(LspError::SpawnFailure { .. })));
    let empty = LspServerConfig::new("python", vec![], "/");
    assert!(matches!(start_session(&empty), Err(LspError::InvalidConfig(_))));
}

#[test]
fn silent_server_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = two_file_project(dir.path(), |s| s["silent"] = json!(true));
    c.request_timeout = 0.3;
    let t = Instant::now();
    assert!(matches!(start_session(&c), Err(LspError::HandshakeTimeout(_))));
    assert!(t.elapsed().as_secs_f64() < 3.0);
}

#[test]
fn server_errors_pass_through_and_malformed_frames_are_protocol_errors() {
    let dir = tempfile::tempdir().unwrap();
    let c = two_file_project(dir.path(), |s| {
        s["files"]["b.py"] = json!({"error": {"code": -32000, "message": "index not ready"}});
    });
    let session = start_session(&c).unwrap();
    match extract_symbols(&session, "b.py") {
        Err(LspError::ServerError { code, message }) => assert_eq!((code, message.as_str()), (-32000, "index not ready")),
        other => panic!("{other:?}"),
    }
    drop(session);

    let dir = tempfile::tempdir().unwrap();
    let c = two_file_project(dir.path(), |s| s["malformed_on"] = json!("textDocument/documentSymbol"));
    let session = start_session(&c).unwrap();
    assert!(matches!(extract_symbols(&session, "a.py"), Err(LspError::ProtocolError(_))));
    assert!(matches!(extract_symbols(&session, "b.py"), Err(LspError::ProtocolError(_))));
}

#[test]
fn two_file_project_graph() {
    for hierarchy in [true, false] {
        let dir = tempfile::tempdir().unwrap();
        let c = two_file_project(dir.path(), |s| s["call_hierarchy"] = json!(hierarchy));
        let ex = extract_graph(&c, "**/*.py", 2).unwrap();
        let g = &ex.graph;
        let count = |k: NodeKind| g.nodes().filter(|n| n.kind == k).count();
        assert_eq!((count(NodeKind::Function), count(NodeKind::Module)), (3, 2));
        let calls: Vec<(&str, &str)> = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Call)
            .map(|e| (e.from.as_str(), e.to.as_str()))
            .collect();
        assert_eq!(calls, [("a.py::f@1", "b.py::g@1"), ("b.py::g@1", "a.py::h@5")], "hierarchy={hierarchy}");
        let imports: Vec<(&str, &str)> = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::Import)
            .map(|e| (e.from.as_str(), e.to.as_str()))
            .collect();
        assert_eq!(imports, [("a.py", "b.py"), ("b.py", "a.py")]);
        assert_eq!(g.node("a.py::f@1").unwrap().code, "def f():\n    g()\n    printf()");
        assert_eq!(ex.report.files, ["a.py", "b.py"]);
    }
}

#[test]
fn one_bad_file_is_reported_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let c = two_file_project(dir.path(), |s| {
        s["files"]["b.py"] = json!({"error": {"code": -32603, "message": "parse failure"}});
    });
    let ex = extract_graph(&c, "*.py", 1).unwrap();
    assert_eq!(ex.report.files, ["a.py"]);
    assert_eq!(ex.report.file_failures.len(), 1);
    assert!(ex.report.file_failures[0].1.contains("parse failure"));
    assert!(ex.graph.contains("a.py::f@1") && !ex.graph.contains("b.py::g@1"));
    assert!(ex.graph.edges().is_empty());

    let dir = tempfile::tempdir().unwrap();
    let c = two_file_project(dir.path(), |s| {
        for f in ["a.py", "b.py"] {
            s["files"][f] = json!({"error": {"code": -32603, "message": "down"}});
        }
    });
    assert!(matches!(extract_graph(&c, "*.py", 1), Err(ExtractError::AllFilesFailed(_))));
}

#[test]
fn empty_glob_is_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = two_file_project(dir.path(), |_| {});
    assert!(matches!(extract_graph(&c, "**/*.rs", 1), Err(ExtractError::NoFiles { .. })));
}

#[test]
fn corpus_routes_agree_and_are_deterministic() {
    let c = stub_config(&corpus_root(), &corpus_script());
    let a = extract_graph(&c, "**/*.py", 4).unwrap();
    let b = extract_graph(&c, "**/*.py", 1).unwrap();
    assert_eq!(graph_to_json(&a.graph), graph_to_json(&b.graph));

    let dir = tempfile::tempdir().unwrap();
    let refs = patched_script(dir.path(), |s| s["call_hierarchy"] = json!(false));
    let r = extract_graph(&stub_config(&corpus_root(), &refs), "**/*.py", 3).unwrap();
    assert_eq!(graph_to_json(&a.graph), graph_to_json(&r.graph));

    let g = &a.graph;
    assert_eq!(g.nodes().filter(|n| n.kind.is_callable()).count(), 24);
    assert_eq!(g.nodes().filter(|n| n.kind == NodeKind::Module).count(), 3);
    let call_count = g.edges().iter().filter(|e| e.kind == EdgeKind::Call).count();
    assert_eq!(call_count, 27);
    let imports: BTreeSet<(&str, &str)> = g
        .edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::Import)
        .map(|e| (e.from.as_str(), e.to.as_str()))
        .collect();
    assert_eq!(imports, BTreeSet::from([("app.py", "config.py"), ("app.py", "report.py"), ("report.py", "config.py")]));
    assert_eq!(
        g.callees("report.py::ReportWriter::render@15"),
        ["report.py::column_widths@38", "report.py::format_row@46"]
    );
    assert!(a.report.symbol_failures.is_empty() && a.report.file_failures.is_empty());
}
