//! `prior.weights` container: magic, header length, JSON header, f32 payload.
//!
//! Layout (all integers little-endian):
//!
//! | bytes            | content                                   |
//! |------------------|-------------------------------------------|
//! | 0..8             | ASCII `MPRIOR01`                          |
//! | 8..12            | `u32` header length `n`                   |
//! | 12..12+n         | UTF-8 JSON header                         |
//! | 12+n..           | payload of `f32` values                   |
//!
//! Tensor offsets in the header are byte offsets into the payload. The
//! `arch_hash` field is the hex SHA-256 of the architecture object serialized
//! as compact JSON with sorted keys.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::PriorError;

pub const MAGIC: &[u8; 8] = b"MPRIOR01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveHeader {
    pub backend: String,
    pub architecture: Value,
    pub arch_hash: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// In-memory weight archive; tensors keep insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightArchive {
    pub backend: String,
    pub architecture: Value,
    pub tensors: Vec<Tensor>,
}

/// Hex SHA-256 of the canonical (sorted-key, compact) architecture JSON.
pub fn architecture_hash(architecture: &Value) -> String {
    let canonical = serde_json::to_string(architecture).expect("JSON value serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn malformed(msg: impl Into<String>) -> PriorError {
    PriorError::MalformedArchive(msg.into())
}

impl WeightArchive {
    pub fn new(backend: &str, architecture: Value) -> Self {
        Self { backend: backend.to_string(), architecture, tensors: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: Vec<usize>, data: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Tensor { name: name.to_string(), shape, data });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn arch_hash(&self) -> String {
        architecture_hash(&self.architecture)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = TensorEntry { name: t.name.clone(), shape: t.shape.clone(), dtype: "f32".into(), offset };
                offset += 4 * t.data.len();
                e
            })
            .collect();
        let header = ArchiveHeader {
            backend: self.backend.clone(),
            architecture: self.architecture.clone(),
            arch_hash: self.arch_hash(),
            tensors: entries,
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + header.len() + offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PriorError> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(malformed("missing MPRIOR01 magic"));
        }
        let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let header_end = 12usize.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| malformed("header truncated"))?;
        let header: ArchiveHeader = serde_json::from_slice(&bytes[12..header_end]).map_err(|e| malformed(format!("bad header: {e}")))?;
        if header.arch_hash != architecture_hash(&header.architecture) {
            return Err(malformed("architecture hash does not match the architecture descriptor"));
        }
        let payload = &bytes[header_end..];
        let mut spans: Vec<(usize, usize, &str)> = Vec::with_capacity(header.tensors.len());
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            if e.dtype != "f32" {
                return Err(malformed(format!("tensor {} has unsupported dtype {}", e.name, e.dtype)));
            }
            let count: usize = e.shape.iter().product();
            let end = e.offset.checked_add(4 * count).ok_or_else(|| malformed("offset overflow"))?;
            if end > payload.len() {
                return Err(malformed(format!("payload truncated inside tensor {}", e.name)));
            }
            spans.push((e.offset, end, &e.name));
            let data = payload[e.offset..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push(Tensor { name: e.name.clone(), shape: e.shape.clone(), data });
        }
        spans.sort();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(malformed(format!("tensors {} and {} overlap", w[0].2, w[1].2)));
            }
        }
        if spans.last().map_or(0, |s| s.1) != payload.len() {
            return Err(malformed("payload length does not match the tensor table"));
        }
        Ok(Self { backend: header.backend, architecture: header.architecture, tensors })
    }

    pub fn read(path: &Path) -> Result<Self, PriorError> {
        let bytes = std::fs::read(path).map_err(|e| PriorError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: &Path) -> Result<(), PriorError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| PriorError::Io(format!("{}: {e}", path.display())))
    }
}
