#![allow(dead_code)]

use std::path::{Path, PathBuf};

use hcgs::lsp::LspServerConfig;
use serde_json::Value;

pub const STUB: &str = env!("CARGO_BIN_EXE_hcgs-stub-lsp");

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn corpus_root() -> PathBuf {
    fixtures().join("mini_corpus")
}

pub fn corpus_script() -> PathBuf {
    fixtures().join("mini_corpus.stub.json")
}

pub fn stub_config(root: &Path, script: &Path) -> LspServerConfig {
    let mut c = LspServerConfig::new(
        "python",
        vec![STUB.to_string(), script.display().to_string()],
        root,
    );
    c.request_timeout = 5.0;
    c
}

/// Writes a modified copy of the corpus script and returns its path.
pub fn patched_script(dir: &Path, patch: impl FnOnce(&mut Value)) -> PathBuf {
    let mut script: Value = serde_json::from_slice(&std::fs::read(corpus_script()).unwrap()).unwrap();
    patch(&mut script);
    let path = dir.join("script.json");
    std::fs::write(&path, serde_json::to_vec(&script).unwrap()).unwrap();
    path
}
