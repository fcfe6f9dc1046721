use super::{
    decode_maxout, encode_user, keys_values, AmaConfig, AmaParameters, KeyValues, Prediction,
};
use crate::error::Result;
use crate::linalg::{axpy, dot, DenseMatrix, ItemEmbeddings};

/// Gradient of one user's data term, with the decoder part kept factored.
///
/// The decoder gradient is `∂/∂s_j = g_j · u_{mode_of[j]}`; storing `g` and
/// the modes instead of the dense n×h matrix keeps per-user memory at O(n).
#[derive(Debug, Clone, PartialEq)]
pub struct UserGradient {
    /// Weighted squared error of this user (no regularizer).
    pub data_loss: f64,
    pub wk: DenseMatrix,
    pub wv: DenseMatrix,
    pub q: DenseMatrix,
    pub b: DenseMatrix,
    /// `∂L/∂r̂_j = −2 c_j (r_j − r̂_j)`.
    pub residual: Vec<f64>,
    pub mode_of: Vec<usize>,
    pub modes: DenseMatrix,
}

impl UserGradient {
    /// Adds the encoder parts into `acc`; the decoder part is left to
    /// [`UserGradient::add_decoder_rows`].
    pub fn add_encoder(&self, acc: &mut AmaParameters) {
        let e = &mut acc.encoder;
        for (dst, src) in [
            (&mut e.wk, &self.wk),
            (&mut e.wv, &self.wv),
            (&mut e.q, &self.q),
            (&mut e.b, &self.b),
        ] {
            axpy(1.0, src.data(), dst.data_mut());
        }
    }

    /// Adds `g_j · u_{mode_of[j]}` into rows `first..first + out.len()/h` of
    /// the decoder gradient, passed as a row-major slice.
    pub fn add_decoder_rows(&self, first: usize, out: &mut [f64], h: usize) {
        for (k, row) in out.chunks_mut(h).enumerate() {
            let j = first + k;
            axpy(self.residual[j], self.modes.row(self.mode_of[j]), row);
        }
    }

    pub fn add_to(&self, acc: &mut AmaParameters) {
        self.add_encoder(acc);
        let h = acc.h();
        self.add_decoder_rows(0, acc.decoder.s.data_mut(), h);
    }
}

/// Forward and backward pass for one user given precomputed keys/values.
///
/// `None` when the corrupted row is empty.
pub(crate) fn user_gradient(
    kv: &KeyValues,
    v: &ItemEmbeddings,
    params: &AmaParameters,
    target: &[u32],
    corrupted: &[u32],
    alpha: f64,
) -> Result<Option<(UserGradient, Prediction)>> {
    if corrupted.is_empty() {
        return Ok(None);
    }
    let enc_p = &params.encoder;
    let s = &params.decoder.s;
    let (h, d, kappa) = (params.h(), params.d(), params.kappa());

    let enc = encode_user(kv, enc_p, corrupted)?;
    let pred = decode_maxout(&enc.modes, &params.decoder);

    // ∂L/∂r̂_j = −2 c_j (r_j − r̂_j)
    let c_obs = 1.0 + alpha * std::f64::consts::LN_2;
    let mut residual: Vec<f64> = pred.scores.iter().map(|&p| 2.0 * p).collect();
    let mut data_loss: f64 = pred.scores.iter().map(|p| p * p).sum();
    for &j in target {
        let j = j as usize;
        let p = pred.scores[j];
        residual[j] = -2.0 * c_obs * (1.0 - p);
        data_loss += c_obs * (1.0 - p) * (1.0 - p) - p * p;
    }

    // Maxout routes each item's gradient to its winning mode only.
    let mut d_modes = DenseMatrix::zeros(d, h);
    for (j, &r) in residual.iter().enumerate() {
        if r != 0.0 {
            axpy(r, s.row(j), d_modes.row_mut(pred.mode_of[j]));
        }
    }
    let d_bias = d_modes.clone();

    let scale = 1.0 / (kappa as f64).sqrt();
    let mut d_wk = DenseMatrix::zeros(h, kappa);
    let mut d_wv = DenseMatrix::zeros(h, h);
    let mut d_q = DenseMatrix::zeros(d, kappa);
    let mut d_logits = DenseMatrix::zeros(d, corrupted.len());

    for l in 0..d {
        let attn = enc.attention.row(l);
        let du = d_modes.row(l);
        let d_attn: Vec<f64> = corrupted
            .iter()
            .map(|&j| dot(du, kv.values.row(j as usize)))
            .collect();
        let mean = dot(attn, &d_attn);
        for (k, dz) in d_logits.row_mut(l).iter_mut().enumerate() {
            *dz = attn[k] * (d_attn[k] - mean);
        }
    }

    let mut d_value = vec![0.0; h];
    let mut d_key = vec![0.0; kappa];
    for (k, &j) in corrupted.iter().enumerate() {
        let j = j as usize;
        let vj = v.item(j);

        d_value.iter_mut().for_each(|x| *x = 0.0);
        d_key.iter_mut().for_each(|x| *x = 0.0);
        for l in 0..d {
            axpy(enc.attention[(l, k)], d_modes.row(l), &mut d_value);
            let dz = d_logits[(l, k)] * scale;
            axpy(dz, enc_p.q.row(l), &mut d_key);
            axpy(dz, kv.keys.row(j), d_q.row_mut(l));
        }
        // ṽ_j = v_j W_v and k_j = v_j W_k: outer products with v_j.
        for (a, &x) in vj.iter().enumerate() {
            if x != 0.0 {
                axpy(x, &d_value, d_wv.row_mut(a));
                axpy(x, &d_key, d_wk.row_mut(a));
            }
        }
    }

    Ok(Some((
        UserGradient {
            data_loss,
            wk: d_wk,
            wv: d_wv,
            q: d_q,
            b: d_bias,
            residual,
            mode_of: pred.mode_of.clone(),
            modes: enc.modes,
        },
        pred,
    )))
}

/// Exact gradient of [`super::loss`] with respect to `{W_k, W_v, Q, B, S}`,
/// including the `2λS` regularizer term. `None` for an empty corrupted row.
pub fn gradients(
    target: &[u32],
    corrupted: &[u32],
    params: &AmaParameters,
    v: &ItemEmbeddings,
    cfg: &AmaConfig,
) -> Result<Option<AmaParameters>> {
    params.check_embeddings(v)?;
    let kv = keys_values(v, &params.encoder)?;
    let Some((ug, _)) = user_gradient(&kv, v, params, target, corrupted, cfg.alpha)? else {
        return Ok(None);
    };
    let mut grads = params.zeros_like();
    ug.add_to(&mut grads);
    axpy(
        2.0 * cfg.lambda,
        params.decoder.s.data(),
        grads.decoder.s.data_mut(),
    );
    Ok(Some(grads))
}
