use std::collections::HashMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use url::Url;

use super::framing::{read_message, write_message, FrameError};

#[derive(Debug, thiserror::Error)]
pub enum LspError {
    #[error("could not launch language server `{command}`: {reason}")]
    SpawnFailure { command: String, reason: String },
    #[error("language server did not finish initialize within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("server error {code}: {message}")]
    ServerError { code: i64, message: String },
    #[error("`{method}` timed out after {timeout:?}")]
    Timeout { method: String, timeout: Duration },
    #[error("invalid server config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LspServerConfig {
    pub language: String,
    pub launch_command: Vec<String>,
    pub root_path: PathBuf,
    #[serde(default)]
    pub initialization_options: Value,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
}

fn default_timeout() -> f64 {
    30.0
}

impl LspServerConfig {
    pub fn new(language: impl Into<String>, launch_command: Vec<String>, root_path: impl Into<PathBuf>) -> Self {
        Self {
            language: language.into(),
            launch_command,
            root_path: root_path.into(),
            initialization_options: Value::Null,
            request_timeout: default_timeout(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout)
    }

    fn validate(&self) -> Result<(), LspError> {
        if self.launch_command.is_empty() {
            return Err(LspError::InvalidConfig("launch_command is empty".into()));
        }
        if !(self.request_timeout > 0.0 && self.request_timeout.is_finite()) {
            return Err(LspError::InvalidConfig("request_timeout must be positive".into()));
        }
        Ok(())
    }
}

type Reply = Result<Value, LspError>;
type Pending = Arc<Mutex<HashMap<u64, Sender<Reply>>>>;

/// A running language server. Requests may be issued from several threads;
/// replies are matched to callers by request id.
pub struct Session {
    child: Child,
    writer: Arc<Mutex<ChildStdin>>,
    pending: Pending,
    closed: Arc<AtomicBool>,
    next_id: AtomicU64,
    capabilities: Value,
    timeout: Duration,
    root: PathBuf,
    reader: Option<JoinHandle<()>>,
}

fn send(writer: &Mutex<ChildStdin>, message: &Value) -> Result<(), LspError> {
    let mut w = writer.lock().unwrap_or_else(|p| p.into_inner());
    write_message(&mut *w, message).map_err(|e| LspError::ProtocolError(format!("write failed: {e}")))
}

fn fail_all(pending: &Pending, why: &str) {
    for (_, tx) in pending.lock().unwrap_or_else(|p| p.into_inner()).drain() {
        let _ = tx.send(Err(LspError::ProtocolError(why.to_string())));
    }
}

fn reader_loop(stdout: std::process::ChildStdout, writer: Arc<Mutex<ChildStdin>>, pending: Pending, closed: Arc<AtomicBool>) {
    let mut input = BufReader::new(stdout);
    let why = loop {
        let msg = match read_message(&mut input) {
            Ok(Some(m)) => m,
            Ok(None) => break "server closed its output".to_string(),
            Err(FrameError::Io(e)) => break format!("read failed: {e}"),
            Err(e) => break format!("malformed frame: {e}"),
        };
        let id = msg.get("id").cloned();
        match (msg.get("method"), id) {
            (Some(_), Some(id)) => {
                // Server-initiated request (workDoneProgress/create, configuration, ...).
                let _ = send(&writer, &json!({"jsonrpc": "2.0", "id": id, "result": null}));
            }
            (Some(_), None) => {}
            (None, Some(id)) => {
                let Some(id) = id.as_u64() else {
                    log::warn!("response with unexpected id {id}");
                    continue;
                };
                let tx = pending.lock().unwrap_or_else(|p| p.into_inner()).remove(&id);
                let Some(tx) = tx else {
                    log::debug!("response to unknown or abandoned request {id}");
                    continue;
                };
                let reply = if let Some(err) = msg.get("error") {
                    Err(LspError::ServerError {
                        code: err.get("code").and_then(Value::as_i64).unwrap_or(0),
                        message: err.get("message").and_then(Value::as_str).unwrap_or("").to_string(),
                    })
                } else {
                    Ok(msg.get("result").cloned().unwrap_or(Value::Null))
                };
                let _ = tx.send(reply);
            }
            (None, None) => log::warn!("ignoring message with neither id nor method"),
        }
    };
    closed.store(true, Ordering::SeqCst);
    fail_all(&pending, &why);
}

pub fn path_to_uri(path: &Path) -> Result<String, LspError> {
    Url::from_file_path(path)
        .map(String::from)
        .map_err(|_| LspError::InvalidConfig(format!("{} is not an absolute path", path.display())))
}

pub fn uri_to_path(uri: &str) -> Option<PathBuf> {
    Url::parse(uri).ok()?.to_file_path().ok()
}

/// Launches the server and completes the initialize handshake.
pub fn start_session(config: &LspServerConfig) -> Result<Session, LspError> {
    config.validate()?;
    let root = std::path::absolute(&config.root_path)
        .map_err(|e| LspError::InvalidConfig(format!("root path {}: {e}", config.root_path.display())))?;
    let mut child = Command::new(&config.launch_command[0])
        .args(&config.launch_command[1..])
        .current_dir(&root)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| LspError::SpawnFailure {
            command: config.launch_command.join(" "),
            reason: e.to_string(),
        })?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let writer = Arc::new(Mutex::new(stdin));
    let pending: Pending = Arc::default();
    let closed = Arc::new(AtomicBool::new(false));
    let reader = {
        let (w, p, c) = (writer.clone(), pending.clone(), closed.clone());
        std::thread::Builder::new()
            .name("lsp-reader".into())
            .spawn(move || reader_loop(stdout, w, p, c))
            .map_err(|e| LspError::SpawnFailure {
                command: config.launch_command.join(" "),
                reason: format!("reader thread: {e}"),
            })?
    };
    let mut session = Session {
        child,
        writer,
        pending,
        closed,
        next_id: AtomicU64::new(1),
        capabilities: Value::Null,
        timeout: config.timeout(),
        root: root.clone(),
        reader: Some(reader),
    };

    let params = json!({
        "processId": std::process::id(),
        "rootUri": path_to_uri(&root)?,
        "rootPath": root.display().to_string(),
        "workspaceFolders": [{"uri": path_to_uri(&root)?, "name": "root"}],
        "initializationOptions": config.initialization_options,
        "capabilities": {
            "textDocument": {
                "documentSymbol": {"hierarchicalDocumentSymbolSupport": true},
                "callHierarchy": {"dynamicRegistration": false},
                "references": {"dynamicRegistration": false},
            },
        },
    });
    let result = match session.request("initialize", params) {
        Ok(r) => r,
        Err(LspError::Timeout { timeout, .. }) => return Err(LspError::HandshakeTimeout(timeout)),
        Err(e) => return Err(e),
    };
    session.capabilities = result.get("capabilities").cloned().unwrap_or(Value::Null);
    session.notify("initialized", json!({}))?;
    Ok(session)
}

impl Session {
    pub fn capabilities(&self) -> &Value {
        &self.capabilities
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn advertises(&self, key: &str) -> bool {
        match self.capabilities.get(key) {
            None | Some(Value::Null) | Some(Value::Bool(false)) => false,
            Some(_) => true,
        }
    }

    pub fn supports_call_hierarchy(&self) -> bool {
        self.advertises("callHierarchyProvider")
    }

    pub fn request(&self, method: &str, params: Value) -> Result<Value, LspError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(LspError::ProtocolError("server connection is closed".into()));
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let (tx, rx) = mpsc::channel();
        self.pending.lock().unwrap_or_else(|p| p.into_inner()).insert(id, tx);
        if self.closed.load(Ordering::SeqCst) {
            self.pending.lock().unwrap_or_else(|p| p.into_inner()).remove(&id);
            return Err(LspError::ProtocolError("server connection is closed".into()));
        }
        let message = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params});
        if let Err(e) = send(&self.writer, &message) {
            self.pending.lock().unwrap_or_else(|p| p.into_inner()).remove(&id);
            return Err(e);
        }
        match rx.recv_timeout(self.timeout) {
            Ok(reply) => reply,
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap_or_else(|p| p.into_inner()).remove(&id);
                Err(LspError::Timeout {
                    method: method.to_string(),
                    timeout: self.timeout,
                })
            }
            Err(RecvTimeoutError::Disconnected) => Err(LspError::ProtocolError("reader stopped".into())),
        }
    }

    pub fn notify(&self, method: &str, params: Value) -> Result<(), LspError> {
        send(&self.writer, &json!({"jsonrpc": "2.0", "method": method, "params": params}))
    }

    pub fn did_open(&self, uri: &str, language: &str, text: &str) -> Result<(), LspError> {
        self.notify(
            "textDocument/didOpen",
            json!({"textDocument": {"uri": uri, "languageId": language, "version": 1, "text": text}}),
        )
    }

    /// Polite shutdown; the process is killed if it does not exit promptly.
    pub fn shutdown(mut self) {
        if !self.closed.load(Ordering::SeqCst) {
            let _ = self.request("shutdown", Value::Null);
            let _ = self.notify("exit", Value::Null);
        }
        self.reap();
    }

    fn reap(&mut self) {
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                break;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let Some(h) = self.reader.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        if self.reader.is_some() {
            let _ = self.child.kill();
            let _ = self.child.wait();
            if let Some(h) = self.reader.take() {
                let _ = h.join();
            }
        }
    }
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("root", &self.root)
            .field("capabilities", &self.capabilities)
            .finish_non_exhaustive()
    }
}
