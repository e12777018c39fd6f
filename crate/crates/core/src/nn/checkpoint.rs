//! Parameter checkpoints.
//!
//! Layout: the 8-byte magic `SPKEMB01`, a little-endian u64 header length,
//! the JSON header, then every tensor's values as little-endian f64 in the
//! order the header lists them.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPKEMB01";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// Layer specs and any other caller metadata.
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorSpec>,
    pub update_count: u64,
    pub lr: f64,
}

pub fn encode_checkpoint(header: &CheckpointHeader, tensors: &[&Tensor]) -> Result<Vec<u8>> {
    if header.tensors.len() != tensors.len() {
        return Err(Error::Checkpoint(format!(
            "header lists {} tensors, got {}",
            header.tensors.len(),
            tensors.len()
        )));
    }
    for (spec, t) in header.tensors.iter().zip(tensors) {
        if spec.shape != t.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?}, header says {:?}",
                spec.name,
                t.shape(),
                spec.shape
            )));
        }
    }
    let json = serde_json::to_vec(header)?;
    let n_values: usize = tensors.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<Tensor>)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body_start = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("header length exceeds file"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..body_start])?;
    let mut offset = body_start;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for spec in &header.tensors {
        let n: usize = spec.shape.iter().product();
        let end = offset + 8 * n;
        if end > bytes.len() {
            return Err(bad(&format!("tensor {} truncated", spec.name)));
        }
        let data = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor::new(spec.shape.clone(), data)?);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    Ok((header, tensors))
}

pub fn write_checkpoint(path: &Path, header: &CheckpointHeader, tensors: &[&Tensor]) -> Result<()> {
    let bytes = encode_checkpoint(header, tensors)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, Vec<Tensor>)> {
    let bytes = std::fs::read(path).map_err(|source| Error::Load {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
