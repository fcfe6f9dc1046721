use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AmaConfig, AmaParameters};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"AMAM";
const VERSION: u32 = 1;

/// JSON sidecar written next to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: AmaConfig,
    /// SHA-256 of the item id list the model was trained against.
    pub item_index_hash: String,
    pub parameter_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
}

/// Binary layout, little endian: `AMAM`, `u32` version, `u64` n, h, d, κ,
/// then `W_k, W_v, Q, B, S` as row-major `f64`.
pub fn encode_model(params: &AmaParameters) -> Vec<u8> {
    let mut buf = Vec::with_capacity(40 + params.parameter_count() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [params.n_items(), params.h(), params.d(), params.kappa()] {
        buf.extend_from_slice(&(dim as u64).to_le_bytes());
    }
    for t in params.tensors() {
        for x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub fn decode_model(bytes: &[u8]) -> Result<AmaParameters> {
    if bytes.len() < 40 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let dim = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
    let (n, h, d, kappa) = (dim(0), dim(1), dim(2), dim(3));
    let mut params = AmaParameters::zeros(n, h, d, kappa);
    let expected = params.parameter_count() * 8;
    let body = &bytes[40..];
    if body.len() != expected {
        return Err(Error::Format(format!(
            "model body has {} bytes, expected {expected}",
            body.len()
        )));
    }
    let mut values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for t in params.tensors_mut() {
        for x in t.data_mut() {
            *x = values.next().expect("length checked");
        }
    }
    if !params.is_finite() {
        return Err(Error::Format("model contains non-finite values".into()));
    }
    Ok(params)
}

/// Writes `path` and a `.json` sidecar next to it.
pub fn save_model(path: &Path, params: &AmaParameters, meta: &ModelMeta) -> Result<()> {
    fs::write(path, encode_model(params)).map_err(|e| Error::io(path, e))?;
    let meta_path = path.with_extension("json");
    fs::write(&meta_path, serde_json::to_string_pretty(meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))
}

pub fn load_model(path: &Path) -> Result<(AmaParameters, ModelMeta)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode_model(&bytes)?;
    let meta_path = path.with_extension("json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMeta = serde_json::from_str(&text)?;
    let c = &meta.config;
    if (c.h, c.d, c.kappa) != (params.h(), params.d(), params.kappa()) {
        return Err(Error::Format(format!(
            "{}: sidecar dims disagree with model file",
            meta_path.display()
        )));
    }
    Ok((params, meta))
}
