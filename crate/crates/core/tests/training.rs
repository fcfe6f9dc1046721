mod common;

use amarec::baselines::pop_scorer;
use amarec::dataset::Split;
use amarec::eval::{evaluate, EvalOptions};
use amarec::model::{encode_model, loss, AmaConfig, AmaParameters, AmaScorer};
use amarec::training::{train, train_with, OptimizerKind, TrainConfig, TrainEvent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        model: AmaConfig {
            h: 6,
            d: 2,
            kappa: 2,
            alpha: 1.0,
            lambda: 1e-4,
            rho: 0.0,
            epochs,
            seed: 11,
        },
        learning_rate: 1e-2,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_initialization() {
    let data = common::multi_taste(30, 20, 4, 1);
    let v = common::embeddings(&data, 6);
    let cfg = small_cfg(0);
    let (params, log) = train(&data, &v, &cfg).unwrap();
    let init = AmaParameters::init(data.n_items(), &cfg.model, &mut ChaCha8Rng::seed_from_u64(11));
    assert_eq!(params, init);
    assert!(log.records.is_empty());
}

#[test]
fn objective_decreases_on_tiny_instance() {
    // m=30, n=20 before filtering, d=2
    let data = common::multi_taste(30, 20, 4, 2);
    let v = common::embeddings(&data, 6);
    let cfg = small_cfg(50);
    let init = AmaParameters::init(data.n_items(), &cfg.model, &mut ChaCha8Rng::seed_from_u64(11));
    let users: Vec<usize> = (0..data.n_users()).filter(|&u| !data.train.row(u).is_empty()).collect();
    let mut epoch0 = 0.0;
    for &u in &users {
        let row = data.train.row(u);
        let (obj, _) = loss(row, row, &init, &v, &cfg.model).unwrap().unwrap();
        // one regularizer per batch, as the trainer counts it
        epoch0 += obj;
    }
    let reg = cfg.model.lambda * init.decoder.s.frobenius_norm().powi(2);
    epoch0 = (epoch0 - (users.len() as f64 - 1.0) * reg) / users.len() as f64;

    let (_, log) = train(&data, &v, &cfg).unwrap();
    let last = log.records.last().unwrap().objective;
    assert!(last < epoch0, "epoch 50 objective {last} not below epoch 0 objective {epoch0}");
    assert!(log.records[49].objective < log.records[0].objective);
}

#[test]
fn heavy_regularization_shrinks_the_decoder() {
    let data = common::multi_taste(40, 24, 4, 3);
    let v = common::embeddings(&data, 6);
    let norm = |lambda: f64| {
        let mut cfg = small_cfg(60);
        cfg.model.lambda = lambda;
        train(&data, &v, &cfg).unwrap().0.decoder.s.frobenius_norm()
    };
    let free = norm(0.0);
    let heavy = norm(1e6);
    assert!(heavy < 0.1 * free, "‖S‖ with λ=1e6: {heavy}, with λ=0: {free}");
}

#[test]
fn thread_count_does_not_change_results() {
    let data = common::multi_taste(80, 40, 5, 4);
    let v = common::embeddings(&data, 6);
    let mut cfg = small_cfg(5);
    cfg.model.rho = 0.3;
    cfg.batch_size = 16;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (params, _) = train(&data, &v, &cfg).unwrap();
            let scorer = AmaScorer::new(params.clone(), v.clone()).unwrap();
            let report = evaluate(&scorer, &data, Split::Test, &EvalOptions::default()).unwrap();
            (encode_model(&params), report.to_json().unwrap())
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn sgd_and_checkpoints() {
    let data = common::multi_taste(30, 20, 4, 5);
    let v = common::embeddings(&data, 6);
    let mut cfg = small_cfg(4);
    cfg.optimizer = OptimizerKind::Sgd;
    cfg.checkpoint_every = 2;
    let mut seen = Vec::new();
    let (params, log) = train_with(&data, &v, &cfg, |e| {
        if let TrainEvent::Checkpoint { epoch, params } = e {
            seen.push((epoch, params.is_finite()));
        }
    })
    .unwrap();
    assert_eq!(seen, vec![(2, true), (4, true)]);
    assert_eq!(log.records.len(), 4);
    assert!(params.is_finite());
}

#[test]
fn validation_selection_keeps_best_epoch() {
    let data = common::multi_taste(60, 30, 4, 6);
    let v = common::embeddings(&data, 6);
    let mut cfg = small_cfg(6);
    cfg.eval_every = 2;
    cfg.select_best = true;
    let (params, log) = train(&data, &v, &cfg).unwrap();
    let best = log.best_epoch.unwrap();
    let ndcg: Vec<(usize, f64)> = log
        .records
        .iter()
        .filter_map(|r| r.validation.as_ref().map(|m| (r.epoch, m["NDCG"])))
        .collect();
    assert_eq!(ndcg.len(), 3);
    let top = ndcg.iter().map(|x| x.1).fold(f64::MIN, f64::max);
    assert_eq!(ndcg.iter().find(|x| x.1 == top).unwrap().0, best);
    let scorer = AmaScorer::new(params, v).unwrap();
    let report = evaluate(&scorer, &data, Split::Validation, &EvalOptions::default()).unwrap();
    assert_eq!(report.means()["NDCG"], top);
}

#[test]
fn multi_taste_training_beats_popularity() {
    let data = common::multi_taste(400, 120, 6, 7);
    let v = common::embeddings(&data, 12);
    let cfg = TrainConfig {
        model: AmaConfig {
            h: 12,
            d: 3,
            kappa: 3,
            alpha: 1.0,
            lambda: 1e-5,
            rho: 0.3,
            epochs: 60,
            seed: 1,
        },
        learning_rate: 1e-2,
        batch_size: 64,
        ..TrainConfig::default()
    };
    let (params, _) = train(&data, &v, &cfg).unwrap();
    let ama = AmaScorer::new(params, v).unwrap();
    let pop = pop_scorer(&data.train).unwrap();
    let opts = EvalOptions::default();
    let a = evaluate(&ama, &data, Split::Test, &opts).unwrap().means();
    let p = evaluate(&pop, &data, Split::Test, &opts).unwrap().means();
    assert!(a["NDCG"] > p["NDCG"], "AMA {:.4} vs POP {:.4}", a["NDCG"], p["NDCG"]);
    assert!(a["R-Precision"] > p["R-Precision"]);
}
