use super::{EmbedError, Embedder};
use crate::util::fnv1a64;

/// Signed feature hashing over unigrams and adjacent-token bigrams.
///
/// Text is split on non-alphanumeric characters and lowercased. Every unigram
/// and every bigram (`"left right"`) is hashed with 64-bit FNV-1a; the feature
/// adds `-1` when bit 63 of the hash is set and `+1` otherwise, at index
/// `hash % dimension`.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension }
    }

    pub fn tokens(text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    fn add(&self, acc: &mut [f64], feature: &str) {
        let h = fnv1a64(feature.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % self.dimension as u64) as usize] += sign;
    }
}

impl Embedder for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let tokens = Self::tokens(text);
        let mut acc = vec![0.0; self.dimension];
        for t in &tokens {
            self.add(&mut acc, t);
        }
        for pair in tokens.windows(2) {
            self.add(&mut acc, &format!("{} {}", pair[0], pair[1]));
        }
        Ok(acc)
    }
}
