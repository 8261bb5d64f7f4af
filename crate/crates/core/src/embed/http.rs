use std::time::Duration;

use serde_json::json;

use super::{EmbedError, Embedder};
use crate::http::{JsonClient, RetryPolicy};

/// Remote embedding service: `POST {"texts": [...]}` answered by
/// `{"vectors": [[...]]}`.
pub struct HttpEmbedder {
    url: String,
    dimension: usize,
    timeout: Duration,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, dimension: usize, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            dimension,
            timeout,
            client: JsonClient::new(timeout, None, RetryPolicy::default()),
        }
    }

    pub fn with_retry(mut self, attempts: u32, base_delay: Duration) -> Self {
        self.client = JsonClient::new(self.timeout, None, RetryPolicy { attempts, base_delay });
        self
    }

    pub fn embed_many(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let reply = self
            .client
            .post(&self.url, &json!({ "texts": texts }))
            .map_err(EmbedError::BackendUnavailable)?;
        let vectors: Vec<Vec<f64>> = serde_json::from_value(reply["vectors"].clone())
            .map_err(|e| EmbedError::BackendUnavailable(format!("malformed embedding reply: {e}")))?;
        if vectors.len() != texts.len() {
            return Err(EmbedError::BackendUnavailable(format!(
                "asked for {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        if let Some(bad) = vectors.iter().find(|v| v.len() != self.dimension) {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                got: bad.len(),
            });
        }
        Ok(vectors)
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        Ok(self.embed_many(&[text])?.remove(0))
    }
}
