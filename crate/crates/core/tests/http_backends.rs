use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use hcgs::embed::{embed, EmbedError, Embedder, HttpEmbedder};
use hcgs::summarize::{BackendError, Generator, HttpLlmBackend, LlmEndpoint};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    authorization: Option<String>,
    body: Value,
}

/// Serves one canned `(status, body)` per connection, in order, recording
/// each request.
fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/generate", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            let mut authorization = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (name, value) = line.split_once(':').unwrap_or((line, ""));
                match name.to_ascii_lowercase().as_str() {
                    "content-length" => length = value.trim().parse().unwrap(),
                    "authorization" => authorization = Some(value.trim().to_string()),
                    _ => {}
                }
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                authorization,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, seen)
}

fn endpoint(url: &str, token: Option<&str>) -> LlmEndpoint {
    LlmEndpoint {
        url: url.to_string(),
        model: "stub-model".into(),
        max_tokens: 64,
        timeout: Duration::from_secs(5),
        token: token.map(str::to_string),
    }
}

#[test]
fn llm_backend_returns_body_text() {
    let (url, seen) = serve(vec![(200, json!({"text": "stub reply"}).to_string())]);
    let backend = HttpLlmBackend::new(endpoint(&url, Some("s3cret")));
    assert_eq!(backend.generate("hello").unwrap(), "stub reply");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].body, json!({"model": "stub-model", "prompt": "hello", "max_tokens": 64}));
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer s3cret"));
}

#[test]
fn llm_backend_retries_then_succeeds() {
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (500, "{}".into()),
        (200, json!({"choices": [{"text": "third time"}]}).to_string()),
    ]);
    let backend = HttpLlmBackend::new(endpoint(&url, None)).with_retry_delay(Duration::from_millis(5));
    assert_eq!(backend.generate("p").unwrap(), "third time");
    assert_eq!(seen.lock().unwrap().len(), 3);
    assert!(seen.lock().unwrap()[0].authorization.is_none());
}

#[test]
fn llm_backend_gives_up_after_three_attempts() {
    let (url, seen) = serve(vec![(503, "{}".into()); 4]);
    let backend = HttpLlmBackend::new(endpoint(&url, None)).with_retry_delay(Duration::from_millis(5));
    assert!(matches!(backend.generate("p"), Err(BackendError::Unavailable(_))));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn embed_backend_round_trip() {
    let (url, seen) = serve(vec![
        (200, json!({"vectors": [[3.0, 4.0, 0.0]]}).to_string()),
        (200, json!({"vectors": [[1.0, 2.0]]}).to_string()),
    ]);
    let e = HttpEmbedder::new(&url, 3, Duration::from_secs(5)).with_retry(1, Duration::from_millis(1));
    let v = embed("some text", &e).unwrap();
    assert_eq!(v.values(), &[0.6, 0.8, 0.0]);
    assert_eq!(seen.lock().unwrap()[0].body, json!({"texts": ["some text"]}));
    assert!(matches!(e.embed_raw("x"), Err(EmbedError::DimensionMismatch { expected: 3, got: 2 })));
}

#[test]
fn unreachable_embed_backend() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/embed", listener.local_addr().unwrap());
    drop(listener);
    let e = HttpEmbedder::new(&url, 4, Duration::from_secs(2)).with_retry(2, Duration::from_millis(1));
    assert!(matches!(e.embed_raw("x"), Err(EmbedError::BackendUnavailable(_))));
}
