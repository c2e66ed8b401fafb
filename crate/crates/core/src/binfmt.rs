//! Tensor container shared by checkpoints and topic models.
//!
//! Layout: an 8-byte little-endian header length, a JSON header
//! `{format, version, meta, tensors: [{name, shape, offset}]}`, then every
//! tensor's values as raw little-endian `f32`, row-major, at `offset` bytes
//! past the end of the header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    /// Identifies what the file holds, e.g. `"checkpoint"`.
    pub format: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Container {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let entries = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape(),
                    offset,
                };
                offset += 4 * t.len() as u64;
                e
            })
            .collect();
        let header = Header {
            format: self.format.clone(),
            version: CONTAINER_VERSION,
            meta: self.meta.clone(),
            tensors: entries,
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + offset as usize);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], expected_format: &str) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Format("file shorter than its length prefix".into()));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes
            .get(8..8usize.saturating_add(hlen))
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)
            .map_err(|e| Error::Format(format!("header: {e}")))?;
        if header.format != expected_format {
            return Err(Error::Format(format!(
                "expected a {expected_format} file, found {:?}",
                header.format
            )));
        }
        if header.version != CONTAINER_VERSION {
            return Err(Error::Format(format!(
                "unsupported version {} (expected {CONTAINER_VERSION})",
                header.version
            )));
        }
        let data = &bytes[8 + hlen..];
        let mut expected_len = 0u64;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let [r, c] = e.shape;
            let n = r
                .checked_mul(c)
                .ok_or_else(|| Error::Format(format!("tensor {}: shape overflow", e.name)))?;
            let start = e.offset as usize;
            let end = start + 4 * n;
            let raw = data.get(start..end).ok_or_else(|| {
                Error::Format(format!("tensor {} extends past end of file", e.name))
            })?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            expected_len = expected_len.max(end as u64);
            tensors.push((e.name, Tensor::from_vec(r, c, values)?));
        }
        if data.len() as u64 != expected_len {
            return Err(Error::Format(format!(
                "{} trailing bytes after tensor data",
                data.len() as u64 - expected_len
            )));
        }
        Ok(Container {
            format: header.format,
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, expected_format: &str) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected_format)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Format(format!("missing tensor {name:?}")))
    }
}
