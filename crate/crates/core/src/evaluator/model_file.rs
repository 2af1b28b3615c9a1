//! The `.fsmlp` model container.
//!
//! Layout (little-endian): 8-byte magic `FSMLP\0\0\0`, `u32` version, `u32`
//! header length, the JSON header, `u64` parameter count, then every
//! parameter as `f32` in the flat order of [`MlpParams`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::MlpParams;
use super::train::{Evaluator, Normalizer, TrainReport};
use crate::error::{Error, Result};
use crate::fsutil;

pub const MAGIC: &[u8; 8] = b"FSMLP\0\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub layer_dims: Vec<usize>,
    pub input_dim: usize,
    pub config_digest: String,
    pub normalizer: Normalizer,
    pub train_report: Option<TrainReport>,
    pub meta_init: bool,
    /// Free-form provenance (effective config, master seed) written by the CLI.
    #[serde(default)]
    pub provenance: Option<serde_json::Value>,
}

pub fn encode_model(model: &Evaluator, provenance: Option<&serde_json::Value>) -> Result<Vec<u8>> {
    let header = ModelHeader {
        layer_dims: model.params.layer_dims().to_vec(),
        input_dim: model.params.input_dim(),
        config_digest: model.config_digest.clone(),
        normalizer: model.normalizer.clone(),
        train_report: model.report.clone(),
        meta_init: model.meta_init,
        provenance: provenance.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    let params = model.params.as_slice();
    let mut bytes = Vec::with_capacity(24 + json.len() + 4 * params.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    bytes.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        bytes.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(bytes)
}

pub fn decode_model(bytes: &[u8], origin: &Path) -> Result<(Evaluator, ModelHeader)> {
    let truncated = |expected: usize| Error::TruncatedPayload {
        expected: expected as u64,
        found: bytes.len() as u64,
    };
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic(origin.to_path_buf()));
    }
    if bytes.len() < 16 {
        return Err(truncated(16));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    if bytes.len() < header_end + 8 {
        return Err(truncated(header_end + 8));
    }
    let header: ModelHeader = serde_json::from_slice(&bytes[16..header_end])?;
    let count = u64::from_le_bytes(bytes[header_end..header_end + 8].try_into().unwrap()) as usize;
    let payload = &bytes[header_end + 8..];
    if payload.len() < count * 4 {
        return Err(truncated(header_end + 8 + count * 4));
    }
    if payload.len() > count * 4 {
        return Err(Error::TrailingBytes {
            extra: (payload.len() - count * 4) as u64,
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let params = MlpParams::from_parts(header.layer_dims.clone(), data)?;
    if params.input_dim() != header.input_dim || header.normalizer.dim() != header.input_dim {
        return Err(Error::ShapeMismatch("header input_dim disagrees with layers".into()));
    }
    let model = Evaluator {
        params,
        normalizer: header.normalizer.clone(),
        config_digest: header.config_digest.clone(),
        report: header.train_report.clone(),
        meta_init: header.meta_init,
    };
    Ok((model, header))
}

pub fn save_model(model: &Evaluator, path: &Path, provenance: Option<&serde_json::Value>) -> Result<()> {
    fsutil::atomic_write(path, &encode_model(model, provenance)?)
}

pub fn load_model(path: &Path) -> Result<Evaluator> {
    Ok(load_model_with_header(path)?.0)
}

pub fn load_model_with_header(path: &Path) -> Result<(Evaluator, ModelHeader)> {
    decode_model(&fsutil::read(path)?, path)
}
