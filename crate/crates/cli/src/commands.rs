use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amarec::baselines::{pop_scorer, puresvd_scorer, Scorer};
use amarec::config::{RunConfig, ScorerKind};
use amarec::dataset::{
    binarize, parse_ratings, read_split, temporal_split, write_split, DatasetMeta, IdIndex, PrepInfo, Split,
    SplitDataset,
};
use amarec::eval::evaluate as rank_and_score;
use amarec::explain::{explain_user, mode_top_items, mode_usage};
use amarec::linalg::{
    item_embeddings, load_embeddings, randomized_svd, save_embeddings, EmbeddingMeta, ItemEmbeddings, SvdOptions,
};
use amarec::model::{load_model, save_model, AmaScorer, ModelMeta};
use amarec::training::{train_with, TrainEvent};
use amarec::{Error, Result};
use sha2::{Digest, Sha256};

use crate::{ConfigArgs, EmbedArgs, EvaluateArgs, ExplainArgs, ModelArgs, PrepArgs, ShowConfigArgs, TrainArgs};

fn resolve(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.preset {
        Some(name) => RunConfig::preset(name)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn item_index_hash(items: &IdIndex) -> String {
    sha256_hex(items.ids().join("\n").as_bytes())
}

fn parse_split(name: &str) -> Result<Split> {
    match name.parse()? {
        Split::Train => Err(Error::Config("split must be validation or test".into())),
        s => Ok(s),
    }
}

pub fn prep(args: PrepArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    let events = parse_ratings(&args.input, cfg.format)?;
    let positives = binarize(&events, cfg.threshold);
    let data = temporal_split(&positives, cfg.fractions)?;
    let info = PrepInfo {
        source: args.input.display().to_string(),
        format: cfg.format.to_string(),
        threshold: cfg.threshold,
        fractions: cfg.fractions,
    };
    let meta = write_split(&args.data.data_dir, &data, info)?;
    let c = &meta.counts;
    eprintln!(
        "{} events, {} positive; {} users × {} items; train {}, validation {}, test {}",
        events.len(),
        positives.len(),
        c.users,
        c.items,
        c.train,
        c.validation,
        c.test
    );
    Ok(())
}

fn compute_embeddings(data: &SplitDataset, meta: &DatasetMeta, cfg: &RunConfig) -> Result<(ItemEmbeddings, EmbeddingMeta)> {
    let h = cfg.train.model.h;
    let opts = SvdOptions {
        rank: h,
        power_iters: cfg.power_iters,
        oversample: cfg.oversample,
        seed: cfg.svd_seed,
    };
    let svd = randomized_svd(&data.train, opts)?;
    let emb = item_embeddings(&svd, cfg.embedding_scale);
    let emeta = EmbeddingMeta {
        h,
        gamma: cfg.power_iters,
        oversample: cfg.oversample,
        seed: cfg.svd_seed,
        scale: cfg.embedding_scale,
        source_hash: meta.content_hash.clone(),
        singular_values: svd.singular_values,
    };
    Ok((emb, emeta))
}

fn embeddings_path(data_dir: &Path, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| data_dir.join("embeddings.bin"))
}

fn model_path(data_dir: &Path, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| data_dir.join("model.bin"))
}

pub fn embed(args: EmbedArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    let (data, meta) = read_split(&args.data.data_dir)?;
    let (emb, emeta) = compute_embeddings(&data, &meta, &cfg)?;
    let path = embeddings_path(&args.data.data_dir, args.out.as_ref());
    save_embeddings(&path, &emb, &emeta)?;
    eprintln!("wrote {} ({} items × {})", path.display(), emb.n_items(), emb.dim());
    Ok(())
}

/// Reuses an embedding file when it was computed from the same data and
/// settings, otherwise recomputes and overwrites it.
fn embeddings_for_training(path: &Path, data: &SplitDataset, meta: &DatasetMeta, cfg: &RunConfig) -> Result<ItemEmbeddings> {
    if path.exists() {
        let (emb, m) = load_embeddings(path)?;
        let fresh = m.source_hash == meta.content_hash
            && m.h == cfg.train.model.h
            && m.gamma == cfg.power_iters
            && m.oversample == cfg.oversample
            && m.seed == cfg.svd_seed
            && m.scale == cfg.embedding_scale;
        if fresh {
            return Ok(emb);
        }
        eprintln!("{} is stale, recomputing", path.display());
    }
    let (emb, emeta) = compute_embeddings(data, meta, cfg)?;
    save_embeddings(path, &emb, &emeta)?;
    Ok(emb)
}

fn checkpoint_path(model: &Path, epoch: usize) -> PathBuf {
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    model.with_file_name(format!("{stem}.epoch-{epoch:04}.bin"))
}

pub fn train(args: TrainArgs) -> Result<()> {
    let cfg = resolve(&args.config)?;
    if cfg.scorer != ScorerKind::Ama {
        return Err(Error::Config(format!(
            "scorer = {} has nothing to train; use `evaluate --baseline`",
            cfg.scorer
        )));
    }
    let dir = &args.data.data_dir;
    let (data, meta) = read_split(dir)?;
    let emb = embeddings_for_training(&embeddings_path(dir, args.embeddings.as_ref()), &data, &meta, &cfg)?;
    let out = model_path(dir, args.model.as_ref());
    let item_hash = item_index_hash(&data.items);
    let model_meta = |epoch, count| ModelMeta {
        config: cfg.train.model.clone(),
        item_index_hash: item_hash.clone(),
        parameter_count: count,
        epoch,
    };

    let started = Instant::now();
    let epochs = cfg.train.model.epochs;
    let mut checkpoint_error = None;
    let (params, log) = train_with(&data, &emb, &cfg.train, |event| match event {
        TrainEvent::Epoch(r) => {
            let val = r
                .validation
                .as_ref()
                .map(|m| format!(", validation NDCG {:.4}", m["NDCG"]))
                .unwrap_or_default();
            eprintln!("epoch {}/{epochs}: objective {:.6}{val} ({:.1}s)", r.epoch, r.objective, r.seconds);
        }
        TrainEvent::Checkpoint { epoch, params } => {
            let path = checkpoint_path(&out, epoch);
            if let Err(e) = save_model(&path, params, &model_meta(Some(epoch), params.parameter_count())) {
                checkpoint_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = checkpoint_error {
        return Err(e);
    }
    save_model(&out, &params, &model_meta(log.best_epoch, params.parameter_count()))?;
    let log_path = out.with_extension("log.csv");
    fs::write(&log_path, log.to_csv()).map_err(|e| Error::io(&log_path, e))?;
    eprintln!(
        "wrote {} ({} parameters) in {:.1}s",
        out.display(),
        params.parameter_count(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn load_scorer(dir: &Path, args: &ModelArgs, data: &SplitDataset) -> Result<(AmaScorer, String)> {
    let path = model_path(dir, args.model.as_ref());
    let (params, meta) = load_model(&path)?;
    if meta.item_index_hash != item_index_hash(&data.items) {
        return Err(Error::Format(format!(
            "{} was trained on a different item index than {}",
            path.display(),
            dir.display()
        )));
    }
    let (emb, _) = load_embeddings(&embeddings_path(dir, args.embeddings.as_ref()))?;
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok((AmaScorer::new(params, emb)?, sha256_hex(&bytes)))
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = resolve(&args.config)?;
    if let Some(ks) = &args.ks {
        cfg.apply_override(&format!("ks={ks}"))?;
        cfg.validate()?;
    }
    let split = parse_split(&args.split)?;
    let dir = &args.data.data_dir;
    let (data, meta) = read_split(dir)?;

    let kind = match &args.baseline {
        Some(b) => match b.parse()? {
            ScorerKind::Ama => return Err(Error::Config("--baseline must be pop or puresvd".into())),
            k => k,
        },
        None if args.model.model.is_some() => ScorerKind::Ama,
        None => cfg.scorer,
    };
    let (scorer, hash): (Box<dyn Scorer>, String) = match kind {
        ScorerKind::Ama => {
            let (s, h) = load_scorer(dir, &args.model, &data)?;
            (Box::new(s), h)
        }
        ScorerKind::Pop => (
            Box::new(pop_scorer(&data.train)?),
            sha256_hex(format!("pop\n{}", meta.content_hash).as_bytes()),
        ),
        ScorerKind::PureSvd => {
            let h = cfg.train.model.h;
            (
                Box::new(puresvd_scorer(&data.train, h, cfg.power_iters, cfg.svd_seed)?),
                sha256_hex(
                    format!("puresvd\n{h}\n{}\n{}\n{}", cfg.power_iters, cfg.svd_seed, meta.content_hash).as_bytes(),
                ),
            )
        }
    };
    let mut report = rank_and_score(scorer.as_ref(), &data, split, &cfg.eval)?;
    report.model_hash = Some(hash);
    if args.table {
        eprint!("{}", report.to_table());
    }
    emit(args.out.as_deref(), &report.to_json()?)
}

pub fn explain(args: ExplainArgs) -> Result<()> {
    let dir = &args.data.data_dir;
    let (data, _) = read_split(dir)?;
    let (scorer, _) = load_scorer(dir, &args.model, &data)?;
    let split = parse_split(&args.split)?;
    let out = args.out.as_deref();

    if let Some(id) = &args.user {
        let u = data.users.get(id).ok_or_else(|| Error::UnknownId {
            kind: "user",
            id: id.clone(),
        })?;
        let history = data.history_for(split)?;
        let mut report = explain_user(&scorer, u, history.row(u), args.k)?;
        report.mark_hits(data.matrix(split).row(u));
        if let Some(dot) = &args.dot {
            fs::write(dot, report.to_dot(&data.items)).map_err(|e| Error::io(dot, e))?;
        }
        emit(out, &report.to_json(&data.items)?)
    } else if args.histogram {
        let hist = mode_usage(&scorer, &data.history_for(split)?, args.k);
        eprintln!(
            "{} users; {:.1}% use two or more modes in their top {}",
            hist.users(),
            100.0 * hist.fraction_at_least(2),
            args.k
        );
        emit(out, &hist.to_csv())
    } else {
        let top = mode_top_items(&scorer, &data.train, args.top_n)?;
        emit(out, &top.to_csv(&data.items)?)
    }
}

pub fn show_config(args: ShowConfigArgs) -> Result<()> {
    print!("{}", resolve(&args.config)?.render());
    Ok(())
}
