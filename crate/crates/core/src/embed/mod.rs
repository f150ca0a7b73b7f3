//! Text embeddings, the exact cosine index, and chunk retrieval on top of it.

mod index;
mod retriever;

use serde::{Deserialize, Serialize};

use crate::chunker;

pub use index::{IndexError, SearchHit, VectorIndex, INDEX_FORMAT_VERSION, INDEX_MAGIC};
pub use retriever::{
    build_index, read_chunks, unique_documents, write_chunks, IndexRetriever, RetrievalError,
    RetrievedChunk, Retriever,
};

pub const DEFAULT_DIM: usize = 256;

/// A unit-norm (or all-zero) embedding.
///
/// Values are stored as `f32` to match the index file, so the norm is one
/// only up to single-precision rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn zero(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    /// L2-normalizes `values`; an all-zero input stays zero.
    pub fn normalized(values: &[f64]) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return EmbeddingVector::zero(values.len());
        }
        EmbeddingVector(values.iter().map(|v| (v / norm) as f32).collect())
    }

    /// Wraps stored values without renormalizing them.
    pub fn from_stored(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }

    /// Cosine similarity, taking the zero vector to similarity 0.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            (self.dot(other) / denom).clamp(-1.0, 1.0)
        }
    }
}

pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Request(String),
    #[error("malformed embedding response: {0}")]
    BadResponse(String),
    #[error("provider returned {got} vectors for {expected} texts")]
    CountMismatch { expected: usize, got: usize },
    #[error("provider returned dimension {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
}

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// One vector per input text, in input order.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut out = self.embed(&[text])?;
        out.pop().ok_or(EmbedError::CountMismatch {
            expected: 1,
            got: 0,
        })
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercases a token and strips punctuation from both ends.
pub fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Offline embedder: signed feature hashing of normalized tokens into `dim`
/// buckets followed by L2 normalization.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: DEFAULT_DIM }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashingEmbedder { dim }
    }

    /// Bucket and sign a normalized token hashes to.
    pub fn bucket(&self, normalized: &str) -> (usize, f64) {
        let h = fnv1a(normalized.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        ((h % self.dim as u64) as usize, sign)
    }

    pub fn embed_text(&self, text: &str) -> EmbeddingVector {
        let mut acc = vec![0.0f64; self.dim];
        for tok in chunker::tokens(text) {
            let tok = normalize_token(tok);
            if tok.is_empty() {
                continue;
            }
            let (b, sign) = self.bucket(&tok);
            acc[b] += sign;
        }
        EmbeddingVector::normalized(&acc)
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn name(&self) -> &str {
        "local-hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_text(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashSet};

    /// Dense bag-of-words cosine over normalized tokens.
    fn bow_cosine(a: &str, b: &str) -> f64 {
        let count = |t: &str| {
            let mut m: BTreeMap<String, f64> = BTreeMap::new();
            for tok in t.split_whitespace().map(normalize_token).filter(|s| !s.is_empty()) {
                *m.entry(tok).or_default() += 1.0;
            }
            m
        };
        let (ca, cb) = (count(a), count(b));
        let dot: f64 = ca.iter().map(|(k, v)| v * cb.get(k).unwrap_or(&0.0)).sum();
        let na = ca.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb = cb.values().map(|v| v * v).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = HashingEmbedder::default();
        let v = e.embed_text("");
        assert_eq!(v.dim(), 256);
        assert!(v.is_zero());
        assert!(e.embed_text(" ... !! ").is_zero());
    }

    #[test]
    fn identical_texts_identical_vectors() {
        let e = HashingEmbedder::default();
        let a = e.embed_text("Come si pagano le tasse?");
        let b = e.embed_text("Come si pagano le tasse?");
        assert_eq!(a, b);
        assert!((a.cosine(&b) - 1.0).abs() < 1e-6);
        assert!((a.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hashing_is_stable_across_runs() {
        let e = HashingEmbedder::new(256);
        // Frozen FNV-1a values for these tokens.
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(e.bucket("a"), ((0xaf63dc4c8601ec8cu64 % 256) as usize, -1.0));
    }

    #[test]
    fn disjoint_buckets_give_zero_cosine() {
        let e = HashingEmbedder::default();
        let mut used = HashSet::new();
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut i = 0;
        while left.len() < 5 || right.len() < 5 {
            let tok = format!("parola{i}");
            i += 1;
            let (b, _) = e.bucket(&tok);
            if !used.insert(b) {
                continue;
            }
            if left.len() < 5 {
                left.push(tok);
            } else {
                right.push(tok);
            }
        }
        let (a, b) = (left.join(" "), right.join(" "));
        assert_eq!(bow_cosine(&a, &b), 0.0);
        assert_eq!(e.embed_text(&a).cosine(&e.embed_text(&b)), 0.0);
    }

    proptest! {
        #[test]
        fn collision_free_hashing_preserves_bow_cosine(
            a in prop::collection::vec(0usize..12, 1..15),
            b in prop::collection::vec(0usize..12, 1..15),
        ) {
            let e = HashingEmbedder::new(4096);
            let vocab: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
            let buckets: HashSet<usize> = vocab.iter().map(|w| e.bucket(w).0).collect();
            prop_assume!(buckets.len() == vocab.len());
            let ta = a.iter().map(|&i| vocab[i].as_str()).collect::<Vec<_>>().join(" ");
            let tb = b.iter().map(|&i| vocab[i].as_str()).collect::<Vec<_>>().join(" ");
            let got = e.embed_text(&ta).cosine(&e.embed_text(&tb));
            prop_assert!((got - bow_cosine(&ta, &tb)).abs() < 1e-6);
        }

        #[test]
        fn nonzero_embeddings_are_unit(text in "\\PC{0,200}") {
            let v = HashingEmbedder::default().embed_text(&text);
            prop_assert!(v.is_zero() || (v.norm() - 1.0).abs() < 1e-6);
        }
    }
}
