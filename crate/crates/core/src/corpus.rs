//! Embedding corpora and the `TRC1` container format.
//!
//! A corpus is an ordered list of documents, each a (possibly empty) run of
//! `d`-dimensional embedding vectors. Rows are stored contiguously in document
//! order; document `i` owns rows `offsets[i]..offsets[i + 1]`.
//!
//! On disk (all integers little-endian):
//!
//! ```text
//! "TRC1" | u32 version=1 | u64 n_docs | u64 T | u32 d | u8 has_tokens
//! n_docs x u64 doc_length
//! T x d x f32 embeddings, row-major
//! if has_tokens: T x (u32 byte_length, UTF-8 bytes)
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"TRC1";
pub const FORMAT_VERSION: u32 = 1;
/// Size of the fixed header in bytes.
pub const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4 + 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("bad magic bytes, expected \"TRC1\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    VersionUnsupported(u32),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("token {0} is not valid UTF-8")]
    InvalidToken(usize),
    #[error("document index {index} out of range for {n_docs} documents")]
    IndexOutOfRange { index: usize, n_docs: usize },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

/// A corpus of documents represented as clouds of embedding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCorpus {
    dim: usize,
    doc_lengths: Vec<usize>,
    offsets: Vec<usize>,
    embeddings: Vec<f64>,
    tokens: Option<Vec<String>>,
}

/// Borrowed view of a single document.
#[derive(Debug, Clone, Copy)]
pub struct DocView<'a> {
    dim: usize,
    rows: &'a [f64],
    tokens: Option<&'a [String]>,
}

impl<'a> DocView<'a> {
    pub fn len(&self) -> usize {
        if self.dim == 0 {
            return self.tokens.map_or(0, |t| t.len());
        }
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `len() x dim()` block of embeddings.
    pub fn as_slice(&self) -> &'a [f64] {
        self.rows
    }

    pub fn row(&self, j: usize) -> &'a [f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        let dim = self.dim.max(1);
        self.rows.chunks_exact(dim)
    }

    pub fn tokens(&self) -> Option<&'a [String]> {
        self.tokens
    }
}

impl EmbeddingCorpus {
    /// Builds a corpus from row-major embeddings. Validates every invariant.
    pub fn new(
        dim: usize,
        doc_lengths: Vec<usize>,
        embeddings: Vec<f64>,
        tokens: Option<Vec<String>>,
    ) -> Result<Self, CorpusError> {
        let total: usize = doc_lengths.iter().sum();
        if embeddings.len() != total * dim {
            return Err(CorpusError::LengthMismatch(format!(
                "doc lengths sum to {total} rows of dim {dim}, but {} values were supplied",
                embeddings.len()
            )));
        }
        if let Some(t) = &tokens {
            if t.len() != total {
                return Err(CorpusError::LengthMismatch(format!(
                    "{} tokens for {total} embeddings",
                    t.len()
                )));
            }
        }
        if let Some(pos) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(CorpusError::NonFiniteValue {
                row: pos / dim.max(1),
                col: pos % dim.max(1),
            });
        }
        let mut offsets = Vec::with_capacity(doc_lengths.len() + 1);
        offsets.push(0);
        let mut acc = 0;
        for &len in &doc_lengths {
            acc += len;
            offsets.push(acc);
        }
        Ok(Self {
            dim,
            doc_lengths,
            offsets,
            embeddings,
            tokens,
        })
    }

    pub fn n_docs(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of embeddings `T`.
    pub fn total_len(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    pub fn doc_lengths(&self) -> &[usize] {
        &self.doc_lengths
    }

    /// Row-major `T x d` embedding matrix.
    pub fn embeddings(&self) -> &[f64] {
        &self.embeddings
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        &self.embeddings[row * self.dim..(row + 1) * self.dim]
    }

    pub fn tokens(&self) -> Option<&[String]> {
        self.tokens.as_deref()
    }

    pub fn has_tokens(&self) -> bool {
        self.tokens.is_some()
    }

    /// Global row index of position `pos` in document `doc`.
    pub fn row_index(&self, doc: usize, pos: usize) -> usize {
        self.offsets[doc] + pos
    }

    /// Document and in-document position of a global row index.
    pub fn locate(&self, row: usize) -> (usize, usize) {
        // offsets is nondecreasing; find the last doc whose start is <= row
        // among docs that actually contain rows.
        let doc = self.offsets.partition_point(|&o| o <= row) - 1;
        (doc, row - self.offsets[doc])
    }

    pub fn doc_slice(&self, i: usize) -> Result<DocView<'_>, CorpusError> {
        if i >= self.n_docs() {
            return Err(CorpusError::IndexOutOfRange {
                index: i,
                n_docs: self.n_docs(),
            });
        }
        let (start, end) = (self.offsets[i], self.offsets[i + 1]);
        Ok(DocView {
            dim: self.dim,
            rows: &self.embeddings[start * self.dim..end * self.dim],
            tokens: self.tokens.as_ref().map(|t| &t[start..end]),
        })
    }

    /// Iterates over all documents in order.
    pub fn docs(&self) -> impl Iterator<Item = DocView<'_>> + '_ {
        (0..self.n_docs()).map(move |i| self.doc_slice(i).expect("index in range"))
    }

    /// Serializes into the `TRC1` byte layout. Values are narrowed to `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let total = self.total_len();
        let mut out = Vec::with_capacity(
            HEADER_LEN + 8 * self.n_docs() + 4 * self.embeddings.len(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_docs() as u64).to_le_bytes());
        out.extend_from_slice(&(total as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.push(u8::from(self.tokens.is_some()));
        for &len in &self.doc_lengths {
            out.extend_from_slice(&(len as u64).to_le_bytes());
        }
        for &v in &self.embeddings {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(tokens) = &self.tokens {
            for t in tokens {
                out.extend_from_slice(&(t.len() as u32).to_le_bytes());
                out.extend_from_slice(t.as_bytes());
            }
        }
        out
    }

    /// Parses a complete `TRC1` image.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CorpusError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CorpusError::BadMagic);
        }
        cur.pos = 4;
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(CorpusError::VersionUnsupported(version));
        }
        let n_docs = to_usize(cur.u64()?)?;
        let total = to_usize(cur.u64()?)?;
        let dim = cur.u32()? as usize;
        let has_tokens = match cur.u8()? {
            0 => false,
            1 => true,
            other => {
                return Err(CorpusError::LengthMismatch(format!(
                    "has_tokens flag must be 0 or 1, found {other}"
                )))
            }
        };

        let lengths_bytes = cur.take(n_docs.checked_mul(8).ok_or_else(overflow)?)?;
        let doc_lengths = lengths_bytes
            .chunks_exact(8)
            .map(|c| to_usize(u64::from_le_bytes(c.try_into().unwrap())))
            .collect::<Result<Vec<_>, _>>()?;
        let sum = doc_lengths
            .iter()
            .try_fold(0usize, |acc, &l| acc.checked_add(l))
            .ok_or_else(overflow)?;
        if sum != total {
            return Err(CorpusError::LengthMismatch(format!(
                "doc lengths sum to {sum} but header declares {total} rows"
            )));
        }

        let n_values = total.checked_mul(dim).ok_or_else(overflow)?;
        let body = cur.take(n_values.checked_mul(4).ok_or_else(overflow)?)?;
        let mut embeddings = Vec::with_capacity(n_values);
        for (idx, c) in body.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(c.try_into().unwrap());
            if !v.is_finite() {
                return Err(CorpusError::NonFiniteValue {
                    row: idx / dim,
                    col: idx % dim,
                });
            }
            embeddings.push(f64::from(v));
        }

        let tokens = if has_tokens {
            let mut tokens = Vec::with_capacity(total);
            for t in 0..total {
                let len = cur.u32()? as usize;
                let raw = cur.take(len)?;
                let s = std::str::from_utf8(raw).map_err(|_| CorpusError::InvalidToken(t))?;
                tokens.push(s.to_owned());
            }
            Some(tokens)
        } else {
            None
        };

        if cur.pos != bytes.len() {
            return Err(CorpusError::LengthMismatch(format!(
                "{} trailing bytes after corpus body",
                bytes.len() - cur.pos
            )));
        }
        Self::new(dim, doc_lengths, embeddings, tokens)
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<EmbeddingCorpus, CorpusError> {
    let bytes = fs::read(path)?;
    EmbeddingCorpus::from_bytes(&bytes)
}

pub fn write_corpus(corpus: &EmbeddingCorpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    file.write_all(&corpus.to_bytes())?;
    file.flush()?;
    Ok(())
}

fn overflow() -> CorpusError {
    CorpusError::LengthMismatch("declared sizes overflow".into())
}

fn to_usize(v: u64) -> Result<usize, CorpusError> {
    usize::try_from(v).map_err(|_| overflow())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CorpusError> {
        let end = self.pos.checked_add(n).ok_or_else(overflow)?;
        if end > self.bytes.len() {
            return Err(CorpusError::LengthMismatch(format!(
                "file truncated: need {end} bytes, have {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CorpusError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CorpusError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CorpusError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
