use std::collections::HashSet;
use std::path::Path;

use super::{dot, EmbeddingVector};
use crate::io::{self, IoError};

pub const INDEX_MAGIC: &[u8; 4] = b"VIDX";
pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("vector has dimension {got}, index dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("not an index file: bad magic bytes {0:02x?}")]
    BadMagic(Vec<u8>),
    #[error("unsupported index format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("index file truncated while reading {what} at byte {offset}")]
    Truncated { what: &'static str, offset: usize },
    #[error("entry id at byte {offset} is not valid UTF-8")]
    InvalidId { offset: usize },
    #[error("{0} unexpected trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub id: String,
    /// Insertion position of the entry.
    pub position: usize,
    pub similarity: f64,
}

/// Exact cosine-similarity index over unit vectors.
///
/// Entries keep insertion order; ids are unique. Search is a full scan.
#[derive(Debug, Clone, Default)]
pub struct VectorIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    seen: HashSet<String>,
}

impl PartialEq for VectorIndex {
    /// Bit-exact comparison of ids and vector values.
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.ids == other.ids
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl VectorIndex {
    pub fn new(dim: usize) -> Self {
        VectorIndex {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, position: usize) -> &[f32] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn add(&mut self, id: impl Into<String>, vector: &EmbeddingVector) -> Result<(), IndexError> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if !self.seen.insert(id.clone()) {
            return Err(IndexError::DuplicateId(id));
        }
        self.ids.push(id);
        self.data.extend_from_slice(vector.values());
        Ok(())
    }

    /// Adds a batch atomically: on error nothing from the batch is kept.
    pub fn add_batch<I, S>(&mut self, entries: I) -> Result<(), IndexError>
    where
        I: IntoIterator<Item = (S, EmbeddingVector)>,
        S: Into<String>,
    {
        let before = self.len();
        for (id, v) in entries {
            if let Err(e) = self.add(id, &v) {
                for id in self.ids.drain(before..) {
                    self.seen.remove(&id);
                }
                self.data.truncate(before * self.dim);
                return Err(e);
            }
        }
        Ok(())
    }

    /// Top-`k` entries by dot product with `query`, descending, ties broken
    /// by lower insertion position. Returns `min(k, len)` hits.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<SearchHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .map(|i| (dot(self.vector(i), query.values()).clamp(-1.0, 1.0), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        let k = k.min(scored.len());
        if k < scored.len() {
            scored.select_nth_unstable_by(k, order);
            scored.truncate(k);
        }
        scored.sort_unstable_by(order);
        Ok(scored
            .into_iter()
            .map(|(similarity, position)| SearchHit {
                id: self.ids[position].clone(),
                position,
                similarity,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let id_bytes: usize = self.ids.iter().map(|id| 4 + id.len()).sum();
        let mut out = Vec::with_capacity(20 + id_bytes + self.data.len() * 4);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in self.vector(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != INDEX_MAGIC {
            return Err(IndexError::BadMagic(magic.to_vec()));
        }
        let version = r.u32("format version")?;
        if version != INDEX_FORMAT_VERSION {
            return Err(IndexError::UnsupportedVersion {
                found: version,
                expected: INDEX_FORMAT_VERSION,
            });
        }
        let dim = r.u32("dimension")? as usize;
        let count = r.u64("entry count")?;
        let mut index = VectorIndex::new(dim);
        for _ in 0..count {
            let len = r.u32("id length")? as usize;
            let offset = r.pos;
            let raw = r.take(len, "entry id")?;
            let id = std::str::from_utf8(raw).map_err(|_| IndexError::InvalidId { offset })?;
            let raw = r.take(dim * 4, "vector")?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            index.add(id, &EmbeddingVector::from_stored(values))?;
        }
        if r.pos != bytes.len() {
            return Err(IndexError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(index)
    }

    pub fn save(&self, destination: &Path) -> Result<(), IndexError> {
        io::write_atomic(destination, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(source: &Path) -> Result<Self, IndexError> {
        let bytes = std::fs::read(source).map_err(|e| IoError::io(source, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(IndexError::Truncated {
                what,
                offset: self.pos,
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, IndexError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, IndexError> {
        let b = self.take(8, what)?;
        let mut arr = [0u8; 8];
        arr.copy_from_slice(b);
        Ok(u64::from_le_bytes(arr))
    }
}
