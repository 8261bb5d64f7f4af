//! LSP base protocol: `Content-Length` headers followed by a UTF-8 JSON body.

use std::io::{self, BufRead, Write};

use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed header line {0:?}")]
    BadHeader(String),
    #[error("frame has no Content-Length header")]
    MissingLength,
    #[error("stream ended inside a frame")]
    Truncated,
    #[error("frame body is not JSON: {0}")]
    BadBody(String),
}

/// Writes one framed message and flushes.
pub fn write_message(out: &mut impl Write, message: &Value) -> io::Result<()> {
    let body = serde_json::to_vec(message).expect("json value serializes");
    write!(out, "Content-Length: {}\r\n\r\n", body.len())?;
    out.write_all(&body)?;
    out.flush()
}

/// Reads one framed message. `Ok(None)` means the stream closed cleanly
/// between frames.
pub fn read_message(input: &mut impl BufRead) -> Result<Option<Value>, FrameError> {
    let mut length = None;
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return if first { Ok(None) } else { Err(FrameError::Truncated) };
        }
        first = false;
        let header = line.trim_end_matches(['\r', '\n']);
        if header.is_empty() {
            break;
        }
        let (name, value) = header.split_once(':').ok_or_else(|| FrameError::BadHeader(header.to_string()))?;
        if name.trim().eq_ignore_ascii_case("content-length") {
            let n = value.trim().parse::<usize>().map_err(|_| FrameError::BadHeader(header.to_string()))?;
            length = Some(n);
        }
    }
    let length = length.ok_or(FrameError::MissingLength)?;
    let mut body = vec![0; length];
    input.read_exact(&mut body).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => FrameError::Truncated,
        _ => FrameError::Io(e),
    })?;
    serde_json::from_slice(&body).map(Some).map_err(|e| FrameError::BadBody(e.to_string()))
}
