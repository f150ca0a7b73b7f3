use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, IndexError, VectorIndex};
use crate::chunker::Chunk;
use crate::io::{self, IoError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub chunk_ref: String,
    pub doc_id: String,
    pub text: String,
    pub similarity: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("index entry `{0}` has no stored chunk")]
    MissingChunk(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

pub trait Retriever: Send + Sync {
    /// Up to `k` chunks most similar to `query`, best first.
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedChunk>, RetrievalError>;
}

/// Parent document ids of `hits`, first occurrence order.
pub fn unique_documents(hits: &[RetrievedChunk]) -> Vec<String> {
    let mut seen = HashSet::new();
    hits.iter()
        .filter(|h| seen.insert(h.doc_id.as_str()))
        .map(|h| h.doc_id.clone())
        .collect()
}

/// Embeds chunks in batches of `batch_size` and indexes them by chunk ref.
pub fn build_index(
    chunks: &[Chunk],
    embedder: &dyn EmbeddingProvider,
    batch_size: usize,
) -> Result<VectorIndex, RetrievalError> {
    let mut index = VectorIndex::new(embedder.dim());
    for batch in chunks.chunks(batch_size.max(1)) {
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        let vectors = embedder.embed(&texts)?;
        if vectors.len() != batch.len() {
            return Err(EmbedError::CountMismatch {
                expected: batch.len(),
                got: vectors.len(),
            }
            .into());
        }
        index.add_batch(batch.iter().map(|c| c.chunk_ref()).zip(vectors))?;
    }
    Ok(index)
}

pub fn write_chunks(path: &Path, chunks: &[Chunk]) -> Result<u64, IoError> {
    io::write_jsonl(path, chunks)
}

pub fn read_chunks(path: &Path) -> Result<Vec<Chunk>, IoError> {
    io::read_jsonl(path)
}

/// Embeds the query, searches the index, and resolves hits to chunk text.
pub struct IndexRetriever {
    index: VectorIndex,
    chunks: HashMap<String, Chunk>,
    embedder: Arc<dyn EmbeddingProvider>,
}

impl IndexRetriever {
    pub fn new(
        index: VectorIndex,
        chunks: Vec<Chunk>,
        embedder: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, RetrievalError> {
        if embedder.dim() != index.dim() {
            return Err(IndexError::DimensionMismatch {
                expected: index.dim(),
                got: embedder.dim(),
            }
            .into());
        }
        let chunks: HashMap<String, Chunk> =
            chunks.into_iter().map(|c| (c.chunk_ref(), c)).collect();
        if let Some(missing) = index.ids().iter().find(|id| !chunks.contains_key(*id)) {
            return Err(RetrievalError::MissingChunk(missing.clone()));
        }
        Ok(IndexRetriever {
            index,
            chunks,
            embedder,
        })
    }

    /// Chunks and indexes `chunks` in one step.
    pub fn build(
        chunks: Vec<Chunk>,
        embedder: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, RetrievalError> {
        let index = build_index(&chunks, embedder.as_ref(), 64)?;
        Self::new(index, chunks, embedder)
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }
}

impl Retriever for IndexRetriever {
    fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievedChunk>, RetrievalError> {
        if self.index.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed_one(query)?;
        let hits = self.index.search(&q, k)?;
        hits.into_iter()
            .map(|h| {
                let chunk = self
                    .chunks
                    .get(&h.id)
                    .ok_or_else(|| RetrievalError::MissingChunk(h.id.clone()))?;
                Ok(RetrievedChunk {
                    chunk_ref: h.id,
                    doc_id: chunk.doc_id.clone(),
                    text: chunk.text.clone(),
                    similarity: h.similarity,
                })
            })
            .collect()
    }
}
