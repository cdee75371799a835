//! Parameter archive: a JSON manifest followed by a raw `f32` blob.
//!
//! ```text
//! "DSTA" | u32 version | u64 manifest length | manifest JSON | blob
//! ```
//!
//! Each manifest entry names a tensor path, its shape and its byte
//! offset in the blob. Entries tile the blob in order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ModelConfig;
use crate::tensor::{Tensor, MAX_RANK};
use crate::training::StreamKind;

pub const ARCHIVE_MAGIC: [u8; 4] = *b"DSTA";
pub const ARCHIVE_VERSION: u32 = 1;
const PREFIX_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    /// Learned parameter.
    Param,
    /// Running statistic; stored but not counted as a parameter.
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveEntry {
    pub path: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
    pub kind: EntryKind,
}

/// How the archived model was trained and what its inputs look like.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub stream: StreamKind,
    pub preprocess: bool,
    pub dual_correlation: bool,
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub model: ModelConfig,
    pub meta: CheckpointMeta,
    pub entries: Vec<ArchiveEntry>,
    pub blob_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterArchive {
    pub manifest: Manifest,
    /// One tensor per manifest entry, in entry order.
    pub tensors: Vec<Tensor>,
}

impl ParameterArchive {
    /// Builds the manifest for `tensors`, laid out back to back.
    pub fn new(model: ModelConfig, meta: CheckpointMeta, tensors: Vec<(String, EntryKind, Tensor)>) -> Self {
        let mut offset = 0u64;
        let mut entries = Vec::with_capacity(tensors.len());
        let mut values = Vec::with_capacity(tensors.len());
        for (path, kind, t) in tensors {
            entries.push(ArchiveEntry {
                path,
                shape: t.shape().to_vec(),
                offset,
                kind,
            });
            offset += 4 * t.len() as u64;
            values.push(t);
        }
        ParameterArchive {
            manifest: Manifest {
                model,
                meta,
                entries,
                blob_bytes: offset,
            },
            tensors: values,
        }
    }

    /// Number of learned scalars; buffers are excluded.
    pub fn param_count(&self) -> usize {
        self.manifest
            .entries
            .iter()
            .zip(&self.tensors)
            .filter(|(e, _)| e.kind == EntryKind::Param)
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.manifest
            .entries
            .iter()
            .position(|e| e.path == path)
            .map(|i| &self.tensors[i])
    }
}

pub fn encode_archive(a: &ParameterArchive) -> Result<Vec<u8>> {
    let json = serde_json::to_vec_pretty(&a.manifest).map_err(|e| Error::input(format!("manifest: {e}")))?;
    let mut out = Vec::with_capacity(PREFIX_LEN + json.len() + a.manifest.blob_bytes as usize);
    out.extend_from_slice(&ARCHIVE_MAGIC);
    out.extend_from_slice(&ARCHIVE_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (e, t) in a.manifest.entries.iter().zip(&a.tensors) {
        if e.shape != t.shape() {
            return Err(Error::dim(format!("{}: manifest shape does not match tensor", e.path)));
        }
        for &x in t.data() {
            let f = x as f32;
            if !f.is_finite() {
                return Err(Error::Numeric(format!("{}: value {x} does not fit f32", e.path)));
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    if out.len() as u64 != (PREFIX_LEN + json.len()) as u64 + a.manifest.blob_bytes {
        return Err(Error::dim("manifest blob size does not match tensors"));
    }
    Ok(out)
}

pub fn decode_archive(buf: &[u8]) -> Result<ParameterArchive> {
    if buf.len() < PREFIX_LEN {
        return Err(Error::format(0, "truncated archive header"));
    }
    if buf[..4] != ARCHIVE_MAGIC {
        return Err(Error::format(0, "bad magic, not a parameter archive"));
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != ARCHIVE_VERSION {
        return Err(Error::format(4, format!("unsupported archive version {version}")));
    }
    let mlen = u64::from_le_bytes(buf[8..16].try_into().expect("8 bytes"));
    let body = &buf[PREFIX_LEN..];
    let mlen = usize::try_from(mlen)
        .ok()
        .filter(|&m| m <= body.len())
        .ok_or_else(|| Error::format(8, format!("manifest length {mlen} exceeds file")))?;
    let manifest: Manifest = serde_json::from_slice(&body[..mlen])
        .map_err(|e| Error::format(PREFIX_LEN, format!("manifest: {e}")))?;
    let blob = &body[mlen..];
    let blob_start = PREFIX_LEN + mlen;
    if manifest.blob_bytes != blob.len() as u64 {
        return Err(Error::format(
            blob_start,
            format!("blob has {} bytes, manifest says {}", blob.len(), manifest.blob_bytes),
        ));
    }
    let mut expected = 0usize;
    let mut tensors = Vec::with_capacity(manifest.entries.len().min(blob.len() / 4 + 1));
    let mut seen = std::collections::HashSet::new();
    for e in &manifest.entries {
        if !seen.insert(e.path.as_str()) {
            return Err(Error::format(PREFIX_LEN, format!("duplicate entry {}", e.path)));
        }
        if e.shape.len() > MAX_RANK {
            return Err(Error::format(PREFIX_LEN, format!("{}: rank {} too large", e.path, e.shape.len())));
        }
        if e.offset != expected as u64 {
            return Err(Error::format(
                PREFIX_LEN,
                format!("{}: offset {} where {expected} was expected", e.path, e.offset),
            ));
        }
        let bytes = e
            .shape
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .filter(|&b| b <= blob.len() - expected)
            .ok_or_else(|| Error::format(blob_start + expected, format!("{}: tensor exceeds blob", e.path)))?;
        let mut data = Vec::with_capacity(bytes / 4);
        for (k, chunk) in blob[expected..expected + bytes].chunks_exact(4).enumerate() {
            let f = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !f.is_finite() {
                return Err(Error::format(blob_start + expected + 4 * k, format!("{}: non-finite value", e.path)));
            }
            data.push(f64::from(f));
        }
        tensors.push(Tensor::new(&e.shape, data)?);
        expected += bytes;
    }
    if expected != blob.len() {
        return Err(Error::format(blob_start + expected, "blob has bytes no entry covers"));
    }
    Ok(ParameterArchive { manifest, tensors })
}
