//! The attentive multi-modal autoencoder.
//!
//! A user's observed items are encoded into `d` preference modes. Each mode
//! `l` owns a trainable query `q_l` and attends over the user's observed
//! items only:
//!
//! ```text
//! k_j = v_j W_k            ṽ_j = v_j W_v
//! a_{l,j} = exp(q_l·k_j / √κ) / Σ_{j'∈obs} exp(q_l·k_j' / √κ)     (j ∈ obs)
//! u_l = Σ_{j∈obs} a_{l,j} ṽ_j + b_l
//! r̂_j = max_l u_l·s_j
//! ```
//!
//! Item embeddings `v_j` are fixed; `{W_k, W_v, Q, B}` and the decoder
//! weights `S` are trained by minimizing the confidence-weighted squared
//! reconstruction error of the clean row from a corrupted input row, plus
//! `λ‖S‖²_F`.

pub(crate) mod grad;
mod io;

pub use grad::{gradients, UserGradient};
pub use io::{decode_model, encode_model, load_model, save_model, ModelMeta};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::baselines::Scorer;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, DenseMatrix, ItemEmbeddings};

/// Model hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmaConfig {
    /// Embedding size `h`.
    pub h: usize,
    /// Number of preference modes `d`.
    pub d: usize,
    /// Key and query size `κ`.
    pub kappa: usize,
    /// Confidence weight `α`.
    pub alpha: f64,
    /// Decoder regularization `λ`.
    pub lambda: f64,
    /// Input corruption rate `ρ`.
    pub rho: f64,
    /// Training epochs `ε`.
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AmaConfig {
    fn default() -> Self {
        AmaConfig {
            h: 40,
            d: 3,
            kappa: 3,
            alpha: 1.0,
            lambda: 1e-5,
            rho: 0.3,
            epochs: 300,
            seed: 0,
        }
    }
}

impl AmaConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.h == 0 || self.d == 0 || self.kappa == 0 {
            return fail(format!(
                "h, d and kappa must be at least 1 (h={}, d={}, kappa={})",
                self.h, self.d, self.kappa
            ));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return fail(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        Ok(())
    }
}

/// Number of trainable parameters: `n·h + h² + d·h + (h+d)·κ`.
pub fn parameter_count(n: usize, h: usize, d: usize, kappa: usize) -> usize {
    n * h + h * h + d * h + (h + d) * kappa
}

/// Encoder weights shared by all users and items.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// h×κ key map.
    pub wk: DenseMatrix,
    /// h×h value map.
    pub wv: DenseMatrix,
    /// d×κ, row `l` is the query of mode `l`.
    pub q: DenseMatrix,
    /// d×h, row `l` is the bias of mode `l`.
    pub b: DenseMatrix,
}

/// Decoder weights: n×h, row `j` is `s_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub s: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmaParameters {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

impl AmaParameters {
    pub fn zeros(n: usize, h: usize, d: usize, kappa: usize) -> Self {
        AmaParameters {
            encoder: EncoderParams {
                wk: DenseMatrix::zeros(h, kappa),
                wv: DenseMatrix::zeros(h, h),
                q: DenseMatrix::zeros(d, kappa),
                b: DenseMatrix::zeros(d, h),
            },
            decoder: DecoderParams {
                s: DenseMatrix::zeros(n, h),
            },
        }
    }

    /// Glorot-uniform `W_k`, `W_v`, `Q`; zero `B` and `S`.
    pub fn init(n: usize, cfg: &AmaConfig, rng: &mut impl RngCore) -> Self {
        let mut p = AmaParameters::zeros(n, cfg.h, cfg.d, cfg.kappa);
        for m in [&mut p.encoder.wk, &mut p.encoder.wv, &mut p.encoder.q] {
            let bound = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            for x in m.data_mut() {
                *x = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        AmaParameters::zeros(self.n_items(), self.h(), self.d(), self.kappa())
    }

    pub fn n_items(&self) -> usize {
        self.decoder.s.rows()
    }

    pub fn h(&self) -> usize {
        self.encoder.wv.rows()
    }

    pub fn d(&self) -> usize {
        self.encoder.q.rows()
    }

    pub fn kappa(&self) -> usize {
        self.encoder.wk.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data().len()).sum()
    }

    /// `[W_k, W_v, Q, B, S]`
    pub fn tensors(&self) -> [&DenseMatrix; 5] {
        let e = &self.encoder;
        [&e.wk, &e.wv, &e.q, &e.b, &self.decoder.s]
    }

    pub fn tensors_mut(&mut self) -> [&mut DenseMatrix; 5] {
        let e = &mut self.encoder;
        [&mut e.wk, &mut e.wv, &mut e.q, &mut e.b, &mut self.decoder.s]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    fn check_embeddings(&self, v: &ItemEmbeddings) -> Result<()> {
        if v.n_items() != self.n_items() || v.dim() != self.h() {
            return Err(Error::dims(
                "item embeddings",
                format!("{}x{}", self.n_items(), self.h()),
                format!("{}x{}", v.n_items(), v.dim()),
            ));
        }
        Ok(())
    }
}

/// Per-item keys (n×κ) and values (n×h) for the current encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyValues {
    pub keys: DenseMatrix,
    pub values: DenseMatrix,
}

/// Applies `W_k` and `W_v` on the right of every item embedding row.
pub fn keys_values(v: &ItemEmbeddings, enc: &EncoderParams) -> Result<KeyValues> {
    let m = v.matrix();
    if m.cols() != enc.wk.rows() || m.cols() != enc.wv.rows() {
        return Err(Error::dims(
            "keys_values",
            format!("embedding width {}", enc.wk.rows()),
            m.cols(),
        ));
    }
    Ok(KeyValues {
        keys: m.matmul(&enc.wk)?,
        values: m.matmul(&enc.wv)?,
    })
}

/// Masked scaled dot-product attention.
///
/// Returns a `d × |obs|` matrix whose row `l` is mode `l`'s softmax over the
/// observed items. Items outside `obs` implicitly carry weight zero.
pub fn attend(keys: &DenseMatrix, queries: &DenseMatrix, obs: &[u32]) -> Result<DenseMatrix> {
    if obs.is_empty() {
        return Err(Error::EmptyHistory);
    }
    if keys.cols() != queries.cols() {
        return Err(Error::dims("attend", keys.cols(), queries.cols()));
    }
    let scale = 1.0 / (queries.cols() as f64).sqrt();
    let mut attn = DenseMatrix::zeros(queries.rows(), obs.len());
    for l in 0..queries.rows() {
        let q = queries.row(l);
        let row = attn.row_mut(l);
        for (a, &j) in row.iter_mut().zip(obs) {
            *a = dot(q, keys.row(j as usize)) * scale;
        }
        softmax_in_place(row);
    }
    Ok(attn)
}

fn softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        z += *v;
    }
    for v in x.iter_mut() {
        *v /= z;
    }
}

/// Mode matrix `U` (d×h): row `l` is `Σ_j a_{l,j} ṽ_j + b_l`.
pub fn encode(attn: &DenseMatrix, values: &DenseMatrix, obs: &[u32], bias: &DenseMatrix) -> DenseMatrix {
    let mut u = bias.clone();
    for l in 0..attn.rows() {
        let out = u.row_mut(l);
        for (&a, &j) in attn.row(l).iter().zip(obs) {
            axpy(a, values.row(j as usize), out);
        }
    }
    u
}

/// Attention and modes of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEncoding {
    /// Observed item indices used as the attention mask.
    pub obs: Vec<u32>,
    /// d × |obs| attention weights.
    pub attention: DenseMatrix,
    /// d × h mode matrix.
    pub modes: DenseMatrix,
}

impl UserEncoding {
    /// Weight mode `l` puts on item `j` (zero off the mask).
    pub fn weight(&self, l: usize, j: usize) -> f64 {
        match self.obs.binary_search(&(j as u32)) {
            Ok(k) => self.attention[(l, k)],
            Err(_) => 0.0,
        }
    }
}

pub fn encode_user(kv: &KeyValues, enc: &EncoderParams, obs: &[u32]) -> Result<UserEncoding> {
    let attention = attend(&kv.keys, &enc.q, obs)?;
    let modes = encode(&attention, &kv.values, obs, &enc.b);
    Ok(UserEncoding {
        obs: obs.to_vec(),
        attention,
        modes,
    })
}

/// Maxout decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub scores: Vec<f64>,
    /// Lowest mode index attaining each item's score.
    pub mode_of: Vec<usize>,
}

/// `scores[j] = max_l u_l·s_j`, ties resolved to the lowest mode.
pub fn decode_maxout(modes: &DenseMatrix, dec: &DecoderParams) -> Prediction {
    let n = dec.s.rows();
    let mut scores = Vec::with_capacity(n);
    let mut mode_of = Vec::with_capacity(n);
    for j in 0..n {
        let s = dec.s.row(j);
        let mut best = dot(modes.row(0), s);
        let mut arg = 0;
        for l in 1..modes.rows() {
            let p = dot(modes.row(l), s);
            if p > best {
                best = p;
                arg = l;
            }
        }
        scores.push(best);
        mode_of.push(arg);
    }
    Prediction { scores, mode_of }
}

/// Score of every item under every mode (d×n).
pub fn per_mode_scores(modes: &DenseMatrix, dec: &DecoderParams) -> DenseMatrix {
    DenseMatrix::from_fn(modes.rows(), dec.s.rows(), |l, j| {
        dot(modes.row(l), dec.s.row(j))
    })
}

/// `c_j = 1 + α·ln(1 + r_j)` for a binary row given by its observed items.
pub fn confidence_weights(obs: &[u32], n: usize, alpha: f64) -> Vec<f64> {
    let mut c = vec![1.0; n];
    let w = 1.0 + alpha * std::f64::consts::LN_2;
    for &j in obs {
        c[j as usize] = w;
    }
    c
}

/// Drops each observed entry independently with probability `rho`.
pub fn corrupt(obs: &[u32], rho: f64, rng: &mut impl Rng) -> Vec<u32> {
    if rho <= 0.0 {
        return obs.to_vec();
    }
    obs.iter()
        .copied()
        .filter(|_| rng.random::<f64>() >= rho)
        .collect()
}

/// Objective of one user: `Σ_j c_j (r_j − r̂_j)² + λ‖S‖²_F`, where `r̂` is
/// decoded from the encoding of `corrupted` and `r` is the clean `target`.
///
/// Returns `None` when `corrupted` is empty; such users are skipped.
pub fn loss(
    target: &[u32],
    corrupted: &[u32],
    params: &AmaParameters,
    v: &ItemEmbeddings,
    cfg: &AmaConfig,
) -> Result<Option<(f64, Prediction)>> {
    params.check_embeddings(v)?;
    let kv = keys_values(v, &params.encoder)?;
    if corrupted.is_empty() {
        return Ok(None);
    }
    let enc = encode_user(&kv, &params.encoder, corrupted)?;
    let pred = decode_maxout(&enc.modes, &params.decoder);
    let data = weighted_error(target, &pred.scores, cfg.alpha);
    Ok(Some((data + regularizer(params, cfg.lambda), pred)))
}

pub(crate) fn weighted_error(target: &[u32], scores: &[f64], alpha: f64) -> f64 {
    let c_obs = 1.0 + alpha * std::f64::consts::LN_2;
    let mut total: f64 = scores.iter().map(|s| s * s).sum();
    for &j in target {
        let s = scores[j as usize];
        total += c_obs * (1.0 - s) * (1.0 - s) - s * s;
    }
    total
}

pub(crate) fn regularizer(params: &AmaParameters, lambda: f64) -> f64 {
    let s = params.decoder.s.frobenius_norm();
    lambda * s * s
}

/// A trained model bound to its item embeddings, ready to score users.
#[derive(Debug, Clone)]
pub struct AmaScorer {
    params: AmaParameters,
    embeddings: ItemEmbeddings,
    kv: KeyValues,
}

impl AmaScorer {
    pub fn new(params: AmaParameters, embeddings: ItemEmbeddings) -> Result<Self> {
        params.check_embeddings(&embeddings)?;
        let kv = keys_values(&embeddings, &params.encoder)?;
        Ok(AmaScorer {
            params,
            embeddings,
            kv,
        })
    }

    pub fn params(&self) -> &AmaParameters {
        &self.params
    }

    pub fn embeddings(&self) -> &ItemEmbeddings {
        &self.embeddings
    }

    pub fn key_values(&self) -> &KeyValues {
        &self.kv
    }

    /// Attention and modes with the full `history` as mask.
    pub fn encode(&self, history: &[u32]) -> Result<UserEncoding> {
        encode_user(&self.kv, &self.params.encoder, history)
    }

    /// Maxout prediction; an empty history decodes from the mode biases alone.
    pub fn predict(&self, history: &[u32]) -> Prediction {
        match self.encode(history) {
            Ok(enc) => decode_maxout(&enc.modes, &self.params.decoder),
            Err(_) => decode_maxout(&self.params.encoder.b, &self.params.decoder),
        }
    }
}

impl Scorer for AmaScorer {
    fn name(&self) -> &str {
        "AMA"
    }

    fn score(&self, _user: usize, history: &[u32]) -> Vec<f64> {
        self.predict(history).scores
    }
}
