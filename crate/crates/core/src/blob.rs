//! Binary embedding blobs.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "XMEC"
//! 4       4     version (u32) = 1
//! 8       4     dim (u32)
//! 12      8     count (u64)
//! 20      ...   count * dim binary32 values, row-major
//! ```

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::model::{EmbeddingVector, ModelError};

pub const MAGIC: &[u8; 4] = b"XMEC";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

#[derive(Debug, Error)]
pub enum BlobError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot write an empty blob")]
    Empty,
    #[error("dimension mismatch at row {row}: expected {expected}, got {actual}")]
    DimMismatch {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("row {row} component {index} is not exactly representable as binary32")]
    NotRepresentable { row: usize, index: usize },
    #[error("{path}: bad magic bytes")]
    BadMagic { path: String },
    #[error("{path}: unsupported version {version}")]
    UnsupportedVersion { path: String, version: u32 },
    #[error("{path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("{path}: ordinal {ordinal} out of range (count {count})")]
    OrdinalOutOfRange {
        path: String,
        ordinal: u64,
        count: u64,
    },
    #[error("{path}: row {ordinal}: {source}")]
    InvalidRow {
        path: String,
        ordinal: u64,
        #[source]
        source: ModelError,
    },
}

/// Header facts of a written blob. Row `i` of the input lives at ordinal `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobIndex {
    pub dim: usize,
    pub count: u64,
}

/// Writes `vectors` to `path`. Vectors must share one dimension and be exactly
/// representable in binary32, so that reading the file back reproduces them.
pub fn write_embedding_blob(
    vectors: &[EmbeddingVector],
    path: impl AsRef<Path>,
) -> Result<BlobIndex, BlobError> {
    let path = path.as_ref();
    let first = vectors.first().ok_or(BlobError::Empty)?;
    let dim = first.dim();
    let mut bytes = Vec::with_capacity(HEADER_LEN + vectors.len() * dim * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    bytes.extend_from_slice(&(vectors.len() as u64).to_le_bytes());
    for (row, v) in vectors.iter().enumerate() {
        if v.dim() != dim {
            return Err(BlobError::DimMismatch {
                row,
                expected: dim,
                actual: v.dim(),
            });
        }
        for (index, &x) in v.values().iter().enumerate() {
            let narrowed = x as f32;
            if f64::from(narrowed) != x {
                return Err(BlobError::NotRepresentable { row, index });
            }
            bytes.extend_from_slice(&narrowed.to_le_bytes());
        }
    }
    let io_err = |source| BlobError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(&bytes).map_err(io_err)?;
    Ok(BlobIndex {
        dim,
        count: vectors.len() as u64,
    })
}

/// A decoded blob. Rows are kept as raw binary32 so that vector validation
/// happens only for rows a manifest actually references.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBlob {
    path: String,
    dim: usize,
    count: u64,
    values: Vec<f32>,
}

impl EmbeddingBlob {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn row(&self, ordinal: u64) -> Option<&[f32]> {
        if ordinal >= self.count {
            return None;
        }
        let start = ordinal as usize * self.dim;
        Some(&self.values[start..start + self.dim])
    }

    pub fn embedding(&self, ordinal: u64) -> Result<EmbeddingVector, BlobError> {
        let row = self.row(ordinal).ok_or_else(|| BlobError::OrdinalOutOfRange {
            path: self.path.clone(),
            ordinal,
            count: self.count,
        })?;
        EmbeddingVector::from_f32(row).map_err(|source| BlobError::InvalidRow {
            path: self.path.clone(),
            ordinal,
            source,
        })
    }
}

pub fn read_embedding_blob(path: impl AsRef<Path>) -> Result<EmbeddingBlob, BlobError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| BlobError::Io {
        path: name.clone(),
        source,
    })?;
    decode(&bytes, name)
}

fn decode(bytes: &[u8], path: String) -> Result<EmbeddingBlob, BlobError> {
    if bytes.len() < HEADER_LEN {
        return Err(BlobError::Corrupt {
            path,
            reason: format!("file is {} bytes, shorter than the header", bytes.len()),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(BlobError::BadMagic { path });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(BlobError::UnsupportedVersion { path, version });
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    if dim == 0 {
        return Err(BlobError::Corrupt {
            path,
            reason: "dimension is zero".into(),
        });
    }
    let expected = (count as u128) * (dim as u128) * 4;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() as u128 != expected {
        return Err(BlobError::Corrupt {
            path,
            reason: format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            ),
        });
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingBlob {
        path,
        dim,
        count,
        values,
    })
}
