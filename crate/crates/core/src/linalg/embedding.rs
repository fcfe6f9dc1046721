use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DenseMatrix, SvdResult};
use crate::error::{Error, Result};

/// How singular values are folded into the right factor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingScale {
    #[default]
    None,
    SqrtSigma,
}

impl FromStr for EmbeddingScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(EmbeddingScale::None),
            "sqrt-sigma" => Ok(EmbeddingScale::SqrtSigma),
            other => Err(Error::Config(format!(
                "unknown embedding scale `{other}` (expected none or sqrt-sigma)"
            ))),
        }
    }
}

impl std::fmt::Display for EmbeddingScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbeddingScale::None => "none",
            EmbeddingScale::SqrtSigma => "sqrt-sigma",
        })
    }
}

/// Fixed `n × h` item embedding matrix; row `j` is item `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddings(DenseMatrix);

impl ItemEmbeddings {
    pub fn new(matrix: DenseMatrix) -> Self {
        ItemEmbeddings(matrix)
    }

    pub fn n_items(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn item(&self, j: usize) -> &[f64] {
        self.0.row(j)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }
}

pub fn item_embeddings(svd: &SvdResult, scale: EmbeddingScale) -> ItemEmbeddings {
    let mut v = svd.right.clone();
    if scale == EmbeddingScale::SqrtSigma {
        for j in 0..v.rows() {
            for (x, s) in v.row_mut(j).iter_mut().zip(&svd.singular_values) {
                *x *= s.sqrt();
            }
        }
    }
    ItemEmbeddings(v)
}

/// Provenance stored next to an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub h: usize,
    pub gamma: usize,
    pub oversample: usize,
    pub seed: u64,
    pub scale: EmbeddingScale,
    pub source_hash: String,
    pub singular_values: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"AMAEMB01";

/// Writes `path` (binary) and `path` with a `.json` extension (metadata).
pub fn save_embeddings(path: &Path, emb: &ItemEmbeddings, meta: &EmbeddingMeta) -> Result<()> {
    let mut buf = Vec::with_capacity(24 + emb.0.data().len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(emb.n_items() as u64).to_le_bytes());
    buf.extend_from_slice(&(emb.dim() as u64).to_le_bytes());
    for x in emb.0.data() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    let meta_path = path.with_extension("json");
    fs::write(&meta_path, serde_json::to_string_pretty(meta)? + "\n")
        .map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn load_embeddings(path: &Path) -> Result<(ItemEmbeddings, EmbeddingMeta)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 24 || &bytes[..8] != MAGIC {
        return Err(Error::Format(format!(
            "{} is not an embedding file",
            path.display()
        )));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[24..];
    if body.len() != rows * cols * 8 {
        return Err(Error::Format(format!(
            "{}: expected {} values, found {} bytes",
            path.display(),
            rows * cols,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let meta_path = path.with_extension("json");
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    Ok((
        ItemEmbeddings(DenseMatrix::new(rows, cols, data)?),
        serde_json::from_str(&text)?,
    ))
}
