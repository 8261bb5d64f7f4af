"""Regenerate mini_corpus.stub.json from the sources in mini_corpus/."""

import ast
import json
import pathlib

ROOT = pathlib.Path(__file__).parent / "mini_corpus"
EXTERNAL = "/opt/python/lib/builtins.py"


def rng(sl, sc, el, ec):
    return {"start": {"line": sl, "character": sc}, "end": {"line": el, "character": ec}}


def symbol(node, kind, children=None):
    offset = 4 if isinstance(node, ast.FunctionDef) else 6
    line = node.lineno - 1
    sym = {
        "name": node.name,
        "kind": kind,
        "range": rng(line, node.col_offset, node.end_lineno - 1, node.end_col_offset),
        "selectionRange": rng(line, node.col_offset + offset, line, node.col_offset + offset + len(node.name)),
    }
    if children is not None:
        sym["children"] = children
    return sym


files = {}
defs = {}
bodies = []
for path in sorted(ROOT.glob("*.py")):
    rel = path.name
    tree = ast.parse(path.read_text())
    syms = []
    for node in tree.body:
        if isinstance(node, ast.FunctionDef):
            s = symbol(node, 12)
            syms.append(s)
            defs[node.name] = (rel, s)
            bodies.append((rel, s, node))
        elif isinstance(node, ast.ClassDef):
            methods = []
            for item in node.body:
                if isinstance(item, ast.FunctionDef):
                    m = symbol(item, 6)
                    methods.append(m)
                    defs[item.name] = (rel, m)
                    bodies.append((rel, m, item))
            cls = symbol(node, 5, methods)
            syms.append(cls)
            defs[node.name] = defs["__init__"]
    files[rel] = {"symbols": syms}


def start(rel, s):
    p = s["selectionRange"]["start"]
    return {"file": rel, "line": p["line"], "character": p["character"]}


calls = []
for rel, s, fn in bodies:
    for node in ast.walk(fn):
        if not isinstance(node, ast.Call):
            continue
        f = node.func
        name = f.id if isinstance(f, ast.Name) else f.attr if isinstance(f, ast.Attribute) else None
        site = {"file": rel, "line": f.end_lineno - 1, "character": f.end_col_offset - len(name or "x")}
        if name in defs:
            calls.append({"from": start(rel, s), "to": start(*defs[name]), "site": site})
        elif isinstance(f, ast.Name) and name in ("print", "open"):
            calls.append({"from": start(rel, s), "to": {"file": EXTERNAL, "line": 0, "character": 0}, "site": site})

calls.sort(key=lambda c: (c["from"]["file"], c["from"]["line"], c["site"]["line"], c["site"]["character"]))
out = pathlib.Path(__file__).parent / "mini_corpus.stub.json"
out.write_text(json.dumps({"files": files, "calls": calls}, indent=1) + "\n")
