//! Versioned tensor container used for checkpoints and feature-extractor weights.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes   "SEMSRBIN"
//! version   u32
//! hlen      u64       length of the header in bytes
//! header    hlen      UTF-8 JSON: {"meta": ..., "tensors": [{"name", "shape"}...], "payload_sha256"}
//! payload             f32 values of every tensor, concatenated in header order
//! ```
//!
//! Loading either yields the complete container or an error; nothing is applied partially.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::{Module, Param};

pub const MAGIC: &[u8; 8] = b"SEMSRBIN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    /// Tensors in file order.
    pub tensors: Vec<(TensorEntry, Vec<f32>)>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Container {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.tensors.push((
            TensorEntry {
                name: name.into(),
                shape: shape.to_vec(),
            },
            values,
        ));
    }

    /// Appends every parameter of `module` (trainable and buffers) under `prefix`.
    pub fn push_module(&mut self, prefix: &str, module: &impl Module<f32>) {
        module.visit(prefix, &mut |name, p| {
            self.push(name, p.shape(), p.value.clone())
        });
    }

    pub fn index(&self) -> BTreeMap<&str, (&TensorEntry, &[f32])> {
        self.tensors
            .iter()
            .map(|(e, v)| (e.name.as_str(), (e, v.as_slice())))
            .collect()
    }

    /// Copies every parameter of `module` from the container. All names must be present with
    /// matching shapes; on any mismatch `module` is left unchanged.
    pub fn load_module(&self, prefix: &str, module: &mut impl Module<f32>) -> Result<()> {
        let index = self.index();
        let mut problems = Vec::new();
        module.visit(prefix, &mut |name, p| match index.get(name) {
            None => problems.push(format!("missing tensor {name}")),
            Some((e, _)) if e.shape != p.shape() => problems.push(format!(
                "tensor {name} has shape {:?}, expected {:?}",
                e.shape,
                p.shape()
            )),
            Some(_) => {}
        });
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")));
        }
        module.visit_mut(prefix, &mut |name, p: &mut Param<f32>| {
            p.value.copy_from_slice(index[name].1);
        });
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload =
            Vec::with_capacity(4 * self.tensors.iter().map(|(_, v)| v.len()).sum::<usize>());
        for (_, v) in &self.tensors {
            for x in v {
                payload.extend_from_slice(&x.to_le_bytes());
            }
        }
        let header = Header {
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|(e, _)| e.clone()).collect(),
            payload_sha256: hex::encode(Sha256::digest(&payload)),
        };
        let header = serde_json::to_vec(&header).map_err(|e| Error::Config(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: String| Error::format(path, msg);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a semsr container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(format!(
                "unsupported container version {version}, expected {VERSION}"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        let hlen = usize::try_from(hlen)
            .ok()
            .filter(|&h| h <= body.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| bad(format!("corrupt header: {e}")))?;
        let payload = &body[hlen..];
        let expected: usize = header
            .tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>() * 4)
            .sum();
        if payload.len() != expected {
            return Err(bad(format!(
                "payload holds {} bytes, header describes {expected}",
                payload.len()
            )));
        }
        if hex::encode(Sha256::digest(payload)) != header.payload_sha256 {
            return Err(bad("payload checksum mismatch".into()));
        }
        let mut offset = 0;
        let tensors = header
            .tensors
            .into_iter()
            .map(|e| {
                let n = e.shape.iter().product::<usize>();
                let values = payload[offset..offset + 4 * n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                offset += 4 * n;
                (e, values)
            })
            .collect();
        Ok(Container {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes through a temporary sibling file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("partial");
        std::fs::write(&tmp, self.to_bytes()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Hex SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
