//! Mini-batch training of [`AmaParameters`].
//!
//! Every epoch shuffles the users, draws a fresh corruption of each user's
//! train row and takes one optimizer step per batch. Per-user gradients are
//! computed in parallel but always summed in ascending user order, so the
//! result does not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Split, SplitDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::linalg::{axpy, ItemEmbeddings};
use crate::model::{
    corrupt, grad::user_gradient, keys_values, regularizer, AmaConfig, AmaParameters, AmaScorer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!(
                "unknown optimizer `{other}` (expected adam or sgd)"
            ))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: AmaConfig,
    pub learning_rate: f64,
    /// Users per optimizer step.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Emit a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    /// Score the validation split every this many epochs; 0 disables.
    pub eval_every: usize,
    /// Return the parameters with the best validation NDCG instead of the last.
    pub select_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: AmaConfig::default(),
            learning_rate: 1e-3,
            batch_size: 512,
            optimizer: OptimizerKind::Adam,
            checkpoint_every: 0,
            eval_every: 0,
            select_best: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.select_best && self.eval_every == 0 {
            return Err(Error::Config(
                "select_best requires eval_every > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch objectives summed over the epoch, divided by users trained.
    pub objective: f64,
    pub seconds: f64,
    /// Users skipped because corruption removed their whole history.
    pub skipped_users: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,objective,seconds\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{:.3}\n", r.epoch, r.objective, r.seconds));
        }
        out
    }
}

pub fn sgd_step(params: &mut AmaParameters, grads: &AmaParameters, lr: f64) {
    for (p, g) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        axpy(-lr, g.data(), p.data_mut());
    }
}

/// First and second moment estimates for [`adam_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: AmaParameters,
    v: AmaParameters,
}

impl AdamState {
    pub fn new(like: &AmaParameters) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }
}

pub fn adam_step(params: &mut AmaParameters, grads: &AmaParameters, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powf(state.step as f64);
    let c2 = 1.0 - b2.powf(state.step as f64);
    let tensors = params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.tensors_mut().into_iter().zip(state.v.tensors_mut()));
    for ((p, g), (m, v)) in tensors {
        let (p, g, m, v) = (p.data_mut(), g.data(), m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

enum Optimizer {
    Sgd,
    Adam(Box<AdamState>),
}

impl Optimizer {
    fn new(kind: OptimizerKind, like: &AmaParameters) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Adam => Optimizer::Adam(Box::new(AdamState::new(like))),
        }
    }

    fn step(&mut self, params: &mut AmaParameters, grads: &AmaParameters, lr: f64) {
        match self {
            Optimizer::Sgd => sgd_step(params, grads, lr),
            Optimizer::Adam(state) => adam_step(params, grads, state, lr),
        }
    }
}

/// Something the trainer reports while running.
pub enum TrainEvent<'a> {
    Epoch(&'a EpochRecord),
    Checkpoint {
        epoch: usize,
        params: &'a AmaParameters,
    },
}

// SplitMix64 finalizer, used to derive independent per-epoch seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn epoch_rng(seed: u64, epoch: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(epoch as u64)));
    rng.set_stream(stream);
    rng
}

const SHUFFLE_STREAM: u64 = u64::MAX;

/// Trains on `data.train` with fixed item embeddings `v`.
pub fn train(
    data: &SplitDataset,
    v: &ItemEmbeddings,
    cfg: &TrainConfig,
) -> Result<(AmaParameters, TrainLog)> {
    train_with(data, v, cfg, |_| {})
}

/// [`train`] with a callback for per-epoch records and checkpoints.
pub fn train_with(
    data: &SplitDataset,
    v: &ItemEmbeddings,
    cfg: &TrainConfig,
    mut observer: impl FnMut(TrainEvent<'_>),
) -> Result<(AmaParameters, TrainLog)> {
    cfg.validate()?;
    let mc = &cfg.model;
    let n = data.n_items();
    if v.n_items() != n || v.dim() != mc.h {
        return Err(Error::dims(
            "item embeddings",
            format!("{n}x{}", mc.h),
            format!("{}x{}", v.n_items(), v.dim()),
        ));
    }

    let mut params = AmaParameters::init(n, mc, &mut ChaCha8Rng::seed_from_u64(mc.seed));
    let mut optimizer = Optimizer::new(cfg.optimizer, &params);
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, AmaParameters)> = None;

    let mut users: Vec<usize> = (0..data.n_users())
        .filter(|&u| !data.train.row(u).is_empty())
        .collect();
    let h = mc.h;
    // Decoder rows per parallel accumulation task.
    let rows_per_task = 64;

    for epoch in 1..=mc.epochs {
        let started = Instant::now();
        users.sort_unstable();
        users.shuffle(&mut epoch_rng(mc.seed, epoch, SHUFFLE_STREAM));

        let mut total = 0.0;
        let mut trained = 0usize;
        let mut skipped = 0usize;
        for (batch_no, chunk) in users.chunks(cfg.batch_size).enumerate() {
            let mut batch = chunk.to_vec();
            batch.sort_unstable();

            let kv = keys_values(v, &params.encoder)?;
            let results: Vec<_> = batch
                .par_iter()
                .map(|&u| {
                    let target = data.train.row(u);
                    let mut rng = epoch_rng(mc.seed, epoch, u as u64);
                    let corrupted = corrupt(target, mc.rho, &mut rng);
                    user_gradient(&kv, v, &params, target, &corrupted, mc.alpha)
                        .map(|r| r.map(|(g, _)| g))
                })
                .collect::<Result<_>>()?;
            let grads_in_batch: Vec<_> = results.into_iter().flatten().collect();
            skipped += batch.len() - grads_in_batch.len();
            trained += grads_in_batch.len();

            let mut grads = params.zeros_like();
            let mut objective = regularizer(&params, mc.lambda);
            for g in &grads_in_batch {
                objective += g.data_loss;
                g.add_encoder(&mut grads);
            }
            grads
                .decoder
                .s
                .data_mut()
                .par_chunks_mut(rows_per_task * h)
                .enumerate()
                .for_each(|(task, out)| {
                    for g in &grads_in_batch {
                        g.add_decoder_rows(task * rows_per_task, out, h);
                    }
                });
            axpy(
                2.0 * mc.lambda,
                params.decoder.s.data(),
                grads.decoder.s.data_mut(),
            );

            if !objective.is_finite() || !grads.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: batch_no,
                });
            }
            total += objective;
            optimizer.step(&mut params, &grads, cfg.learning_rate);
        }

        let mut record = EpochRecord {
            epoch,
            objective: total / trained.max(1) as f64,
            seconds: started.elapsed().as_secs_f64(),
            skipped_users: skipped,
            validation: None,
        };
        if cfg.eval_every > 0 && epoch % cfg.eval_every == 0 {
            let scorer = AmaScorer::new(params.clone(), v.clone())?;
            let report = evaluate(&scorer, data, Split::Validation, &EvalOptions::default())?;
            let metrics = report.means();
            if cfg.select_best {
                let ndcg = metrics.get("NDCG").copied().unwrap_or(0.0);
                if best.as_ref().is_none_or(|(b, _, _)| ndcg > *b) {
                    best = Some((ndcg, epoch, params.clone()));
                }
            }
            record.validation = Some(metrics);
        }
        observer(TrainEvent::Epoch(&record));
        log.records.push(record);
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            observer(TrainEvent::Checkpoint {
                epoch,
                params: &params,
            });
        }
    }

    if let Some((_, epoch, p)) = best {
        log.best_epoch = Some(epoch);
        params = p;
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params_with(value: f64) -> AmaParameters {
        let mut p = AmaParameters::zeros(3, 2, 1, 1);
        for t in p.tensors_mut() {
            t.fill(value);
        }
        p
    }

    #[test]
    fn sgd_examples() {
        let mut p = params_with(1.0);
        sgd_step(&mut p, &params_with(0.0), 0.1);
        assert_eq!(p, params_with(1.0));
        sgd_step(&mut p, &params_with(2.0), 0.1);
        assert!(p.tensors().iter().all(|t| t.data().iter().all(|x| (x - 0.8).abs() < 1e-15)));
    }

    #[test]
    fn adam_constant_gradient_step_approaches_lr() {
        let mut p = params_with(0.0);
        let g = params_with(0.37);
        let mut state = AdamState::new(&p);
        let lr = 0.01;
        let mut last = 0.0;
        for _ in 0..2000 {
            let before = p.decoder.s[(0, 0)];
            adam_step(&mut p, &g, &mut state, lr);
            last = before - p.decoder.s[(0, 0)];
        }
        // with bias correction m̂ = g and v̂ = g² exactly, so the step is lr·|g|/(|g|+ε)
        assert!((last - lr).abs() < 1e-9, "step {last}");
    }

    #[test]
    fn optimizer_parsing() {
        assert_eq!("adam".parse::<OptimizerKind>().unwrap(), OptimizerKind::Adam);
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_log() {
        let log = TrainLog {
            records: vec![EpochRecord {
                epoch: 1,
                objective: 2.5,
                seconds: 0.1234,
                skipped_users: 0,
                validation: None,
            }],
            best_epoch: None,
        };
        assert_eq!(log.to_csv(), "epoch,objective,seconds\n1,2.5,0.123\n");
    }
}
