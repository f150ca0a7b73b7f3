//! Whitespace tokenization and sliding-window chunking.
//!
//! A token is a maximal run of non-whitespace characters. Windows of
//! `chunk_size` tokens start every `chunk_size - overlap` tokens; the last
//! window is truncated at the end of the document and kept regardless of its
//! length, so every token lands in at least one chunk.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::RawDocument;

pub const DEFAULT_CHUNK_SIZE: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 50;

/// Byte offsets of every token in `text`.
pub fn tokenize(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(s..text.len());
    }
    spans
}

/// Token strings of `text`, in order.
pub fn tokens(text: &str) -> Vec<&str> {
    tokenize(text).into_iter().map(|r| &text[r]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub text: String,
}

impl Chunk {
    /// Stable reference used as the vector-index entry id.
    pub fn chunk_ref(&self) -> String {
        format!("{}#{}", self.doc_id, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChunkError {
    #[error("overlap {overlap} must be smaller than chunk size {chunk_size}")]
    OverlapTooLarge { chunk_size: usize, overlap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub chunk_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

impl ChunkParams {
    pub fn new(chunk_size: usize, overlap: usize) -> Result<Self, ChunkError> {
        if overlap >= chunk_size {
            return Err(ChunkError::OverlapTooLarge {
                chunk_size,
                overlap,
            });
        }
        Ok(ChunkParams {
            chunk_size,
            overlap,
        })
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }

    /// Token ranges of the windows over a document of `token_count` tokens.
    pub fn windows(&self, token_count: usize) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.expected_chunks(token_count));
        if token_count == 0 {
            return out;
        }
        let mut start = 0;
        loop {
            let end = (start + self.chunk_size).min(token_count);
            out.push(start..end);
            if end == token_count {
                break;
            }
            start += self.stride();
        }
        out
    }

    /// Closed-form window count for `token_count` tokens.
    pub fn expected_chunks(&self, token_count: usize) -> usize {
        if token_count == 0 {
            0
        } else if token_count <= self.chunk_size {
            1
        } else {
            1 + (token_count - self.chunk_size).div_ceil(self.stride())
        }
    }
}

/// Splits a document into overlapping token windows. Chunk text is the
/// original slice from the first token's start to the last token's end, so
/// inner whitespace is preserved.
pub fn chunk(doc: &RawDocument, params: ChunkParams) -> Result<Vec<Chunk>, ChunkError> {
    let params = ChunkParams::new(params.chunk_size, params.overlap)?;
    let spans = tokenize(&doc.text);
    Ok(params
        .windows(spans.len())
        .into_iter()
        .enumerate()
        .map(|(seq, w)| Chunk {
            doc_id: doc.doc_id.clone(),
            seq,
            token_start: w.start,
            token_end: w.end,
            text: doc.text[spans[w.start].start..spans[w.end - 1].end].to_string(),
        })
        .collect())
}

pub fn chunk_all(docs: &[RawDocument], params: ChunkParams) -> Result<Vec<Chunk>, ChunkError> {
    let mut out = Vec::new();
    for doc in docs {
        out.extend(chunk(doc, params)?);
    }
    Ok(out)
}
