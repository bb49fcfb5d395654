//! Parameter checkpoint container.
//!
//! Layout: an 8-byte little-endian header length, a JSON header, then the raw
//! parameter payload as little-endian `f32`. Tensor offsets in the header are
//! byte offsets into the payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const FORMAT_NAME: &str = "liquidnet-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub dtype: String,
    pub architecture: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode_checkpoint(architecture: serde_json::Value, tensors: &[NamedTensor]) -> Vec<u8> {
    let mut entries = Vec::with_capacity(tensors.len());
    let mut offset = 0u64;
    for t in tensors {
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            offset,
            len: t.data.len() as u64,
        });
        offset += 4 * t.data.len() as u64;
    }
    let header = CheckpointHeader {
        format: FORMAT_NAME.to_string(),
        version: FORMAT_VERSION,
        endianness: "little".to_string(),
        dtype: "f32".to_string(),
        architecture,
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + offset as usize);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(
    path: &Path,
    bytes: &[u8],
) -> Result<(CheckpointHeader, Vec<NamedTensor>)> {
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < 8 {
        return Err(bad("truncated header length"));
    }
    let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let payload_start = 8usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length exceeds file"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[8..payload_start])
        .map_err(|e| bad(&format!("header: {e}")))?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(bad(&format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if header.endianness != "little" || header.dtype != "f32" {
        return Err(bad("only little-endian f32 payloads are supported"));
    }
    let payload = &bytes[payload_start..];
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let elems: usize = e.shape.iter().product();
        if elems as u64 != e.len {
            return Err(bad(&format!("tensor {} shape/length disagree", e.name)));
        }
        let start = e.offset as usize;
        let end = start
            .checked_add(4 * elems)
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| bad(&format!("tensor {} runs past end of file", e.name)))?;
        let data = payload[start..end]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        tensors.push(NamedTensor {
            name: e.name.clone(),
            shape: e.shape.clone(),
            data,
        });
    }
    Ok((header, tensors))
}

pub fn save_checkpoint(
    path: &Path,
    architecture: serde_json::Value,
    tensors: &[NamedTensor],
) -> Result<()> {
    write_atomic(path, &encode_checkpoint(architecture, tensors))
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<NamedTensor>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}
