//! Byte formats: the tensor wire format used between nodes and raw PCM input.
//!
//! Tensor layout (little-endian):
//!
//! ```text
//! u32 channels | u32 frames | f32 x channels*frames
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::{ExecError, Tensor};
use crate::pipeline::TensorShape;

pub const HEADER_BYTES: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("invalid tensor: {0}")]
    Tensor(#[from] ExecError),
    #[error("pcm: {0}")]
    Pcm(String),
}

/// Serialized size of a tensor with `shape`.
pub fn encoded_len(shape: TensorShape) -> usize {
    HEADER_BYTES + 4 * shape.elements()
}

pub fn serialize(t: &Tensor) -> Vec<u8> {
    let shape = t.shape();
    let mut out = Vec::with_capacity(encoded_len(shape));
    out.extend_from_slice(&(shape.channels as u32).to_le_bytes());
    out.extend_from_slice(&(shape.frames as u32).to_le_bytes());
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn deserialize(bytes: &[u8]) -> Result<Tensor, WireError> {
    if bytes.len() < HEADER_BYTES {
        return Err(WireError::MalformedHeader(format!(
            "{} bytes, need {HEADER_BYTES}",
            bytes.len()
        )));
    }
    let channels = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if channels == 0 || frames == 0 {
        return Err(WireError::MalformedHeader(format!(
            "zero dimension {channels}x{frames}"
        )));
    }
    let shape = TensorShape::new(channels, frames);
    let expected = encoded_len(shape);
    if bytes.len() < expected {
        return Err(WireError::TruncatedPayload {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(WireError::MalformedHeader(format!(
            "header declares {expected} bytes, stream has {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::new(shape, data)?)
}

/// Hex SHA-256 of the serialized tensor.
pub fn digest(t: &Tensor) -> String {
    hex::encode(Sha256::digest(serialize(t)))
}

/// JSON form of a tensor, used for feature files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub channels: usize,
    pub frames: usize,
    pub data: Vec<f32>,
}

impl From<&Tensor> for TensorDoc {
    fn from(t: &Tensor) -> Self {
        Self {
            channels: t.shape().channels,
            frames: t.shape().frames,
            data: t.data().to_vec(),
        }
    }
}

impl TryFrom<TensorDoc> for Tensor {
    type Error = ExecError;

    fn try_from(doc: TensorDoc) -> Result<Self, Self::Error> {
        Tensor::new(TensorShape::new(doc.channels, doc.frames), doc.data)
    }
}

/// Decodes signed 16-bit little-endian PCM into a `1 x m` tensor in [-1, 1).
pub fn pcm16_to_tensor(bytes: &[u8]) -> Result<Tensor, WireError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(2) {
        return Err(WireError::Pcm(format!(
            "{} bytes is not a whole number of 16-bit samples",
            bytes.len()
        )));
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
        .collect();
    Ok(Tensor::signal(samples)?)
}

pub fn read_pcm16(path: &Path) -> Result<Tensor, WireError> {
    let bytes =
        std::fs::read(path).map_err(|e| WireError::Pcm(format!("{}: {e}", path.display())))?;
    pcm16_to_tensor(&bytes)
}
