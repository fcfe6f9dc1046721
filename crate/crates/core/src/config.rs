//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, and later lines override
//! earlier ones. Presets are ordinary config files bundled into the binary.
//!
//! ```
//! use amarec::config::RunConfig;
//!
//! let mut cfg = RunConfig::preset("ml1m-ama").unwrap();
//! cfg.apply_str("epochs = 5\nd = 2").unwrap();
//! assert_eq!((cfg.train.model.h, cfg.train.model.d, cfg.train.model.epochs), (40, 2, 5));
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnOrder, RatingFormat, SplitFractions};
use crate::error::{Error, Result};
use crate::eval::EvalOptions;
use crate::linalg::EmbeddingScale;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScorerKind {
    Ama,
    Pop,
    PureSvd,
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ama" => Ok(ScorerKind::Ama),
            "pop" => Ok(ScorerKind::Pop),
            "puresvd" => Ok(ScorerKind::PureSvd),
            other => Err(Error::Config(format!(
                "unknown scorer {other:?} (expected ama, pop or puresvd)"
            ))),
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerKind::Ama => "ama",
            ScorerKind::Pop => "pop",
            ScorerKind::PureSvd => "puresvd",
        })
    }
}

/// Documentation for one config key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyDoc {
    pub key: &'static str,
    /// Conventional math symbol, if the quantity has one.
    pub symbol: Option<&'static str>,
    pub help: &'static str,
}

const fn key(key: &'static str, symbol: Option<&'static str>, help: &'static str) -> KeyDoc {
    KeyDoc { key, symbol, help }
}

/// Every accepted key, in the order [`RunConfig::render`] writes them.
pub const KEYS: &[KeyDoc] = &[
    key("scorer", None, "model family: ama, pop or puresvd"),
    key("format", None, "raw rating file layout: movielens-dat or amazon-csv"),
    key("columns", None, "amazon-csv column order, e.g. item,user,rating,timestamp"),
    key("threshold", Some("ϑ"), "ratings strictly above this count as positive"),
    key("train_fraction", None, "share of each user's events, oldest first, kept for training"),
    key("validation_fraction", None, "share of each user's events used for validation"),
    key("test_fraction", None, "share of each user's events, newest last, used for testing"),
    key("h", Some("h"), "embedding size, also the PureSVD rank"),
    key("gamma", Some("γ"), "power iterations of the randomized SVD"),
    key("oversample", None, "extra random probes of the randomized SVD"),
    key("svd_seed", None, "seed of the randomized SVD probes"),
    key("embedding_scale", None, "item embedding scaling: none or sqrt-sigma"),
    key("d", Some("d"), "number of preference modes per user"),
    key("kappa", Some("κ"), "key and query size"),
    key("alpha", Some("α"), "confidence weight, c = 1 + α·ln(1 + r)"),
    key("lambda", Some("λ"), "decoder regularization strength"),
    key("rho", Some("ρ"), "corruption rate, probability of dropping an observed item"),
    key("epochs", Some("ε"), "training epochs"),
    key("seed", None, "seed for initialization, corruption and shuffling"),
    key("learning_rate", Some("η"), "optimizer step size"),
    key("batch_size", None, "users per optimizer step"),
    key("optimizer", None, "adam or sgd"),
    key("checkpoint_every", None, "write a checkpoint every N epochs (0 disables)"),
    key("eval_every", None, "validation ranking every N epochs (0 disables)"),
    key("select_best", None, "keep the parameters with the best validation NDCG"),
    key("ks", Some("K"), "comma-separated cutoffs for the @K metrics"),
    key("list_len", None, "ranks counted by NDCG (default: largest K)"),
    key("nce", None, "reserved for NCE embedding initialization; must be false"),
];

/// Settings for every stage of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scorer: ScorerKind,
    pub format: RatingFormat,
    pub threshold: f64,
    pub fractions: SplitFractions,
    pub power_iters: usize,
    pub oversample: usize,
    pub svd_seed: u64,
    pub embedding_scale: EmbeddingScale,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub nce: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scorer: ScorerKind::Ama,
            format: RatingFormat::MovieLensDat,
            threshold: 3.0,
            fractions: SplitFractions::default(),
            power_iters: 10,
            oversample: 10,
            svd_seed: 0,
            embedding_scale: EmbeddingScale::None,
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            nce: false,
        }
    }
}

/// Bundled presets as `(name, file contents)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("ml1m-ama", include_str!("../presets/ml1m-ama.conf")),
    ("ml1m-pop", include_str!("../presets/ml1m-pop.conf")),
    ("ml1m-puresvd", include_str!("../presets/ml1m-puresvd.conf")),
    ("amazon-music-ama", include_str!("../presets/amazon-music-ama.conf")),
    ("amazon-music-pop", include_str!("../presets/amazon-music-pop.conf")),
    ("amazon-music-puresvd", include_str!("../presets/amazon-music-puresvd.conf")),
    ("amazon-games-ama", include_str!("../presets/amazon-games-ama.conf")),
    ("amazon-games-pop", include_str!("../presets/amazon-games-pop.conf")),
    ("amazon-games-puresvd", include_str!("../presets/amazon-games-puresvd.conf")),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

fn parse_ks(value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|k| parse("ks", k.trim()))
        .collect()
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
            let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset {name:?} (available: {})", names.join(", ")))
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.train.model;
        match key {
            "scorer" => self.scorer = parse(key, value)?,
            "format" => {
                let columns = match self.format {
                    RatingFormat::AmazonCsv(c) => Some(c),
                    RatingFormat::MovieLensDat => None,
                };
                self.format = parse(key, value)?;
                if let (RatingFormat::AmazonCsv(c), Some(prev)) = (&mut self.format, columns) {
                    *c = prev;
                }
            }
            "columns" => {
                let order: ColumnOrder = parse(key, value)?;
                self.format = RatingFormat::AmazonCsv(order);
            }
            "threshold" => self.threshold = parse(key, value)?,
            "train_fraction" => self.fractions.train = parse(key, value)?,
            "validation_fraction" => self.fractions.validation = parse(key, value)?,
            "test_fraction" => self.fractions.test = parse(key, value)?,
            "h" => m.h = parse(key, value)?,
            "gamma" => self.power_iters = parse(key, value)?,
            "oversample" => self.oversample = parse(key, value)?,
            "svd_seed" => self.svd_seed = parse(key, value)?,
            "embedding_scale" => self.embedding_scale = parse(key, value)?,
            "d" => m.d = parse(key, value)?,
            "kappa" => m.kappa = parse(key, value)?,
            "alpha" => m.alpha = parse(key, value)?,
            "lambda" => m.lambda = parse(key, value)?,
            "rho" => m.rho = parse(key, value)?,
            "epochs" => m.epochs = parse(key, value)?,
            "seed" => m.seed = parse(key, value)?,
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "optimizer" => self.train.optimizer = parse(key, value)?,
            "checkpoint_every" => self.train.checkpoint_every = parse(key, value)?,
            "eval_every" => self.train.eval_every = parse(key, value)?,
            "select_best" => self.train.select_best = parse_bool(key, value)?,
            "ks" => self.eval.ks = parse_ks(value)?,
            "list_len" => {
                self.eval.list_len = match value {
                    "" | "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "nce" => self.nce = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Checks every setting before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.nce {
            return Err(Error::Config(
                "nce = true is reserved; NCE embedding initialization is not implemented".into(),
            ));
        }
        if !self.threshold.is_finite() {
            return Err(Error::Config("threshold must be finite".into()));
        }
        self.fractions.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// The configuration as a config file that parses back to `self`.
    pub fn render(&self) -> String {
        let m = &self.train.model;
        let (format, columns) = match self.format {
            RatingFormat::MovieLensDat => ("movielens-dat".to_string(), None),
            RatingFormat::AmazonCsv(c) => ("amazon-csv".to_string(), Some(c.to_string())),
        };
        let ks: Vec<String> = self.eval.ks.iter().map(|k| k.to_string()).collect();
        let mut lines = vec![
            ("scorer", self.scorer.to_string()),
            ("format", format),
        ];
        if let Some(c) = columns {
            lines.push(("columns", c));
        }
        lines.extend([
            ("threshold", self.threshold.to_string()),
            ("train_fraction", self.fractions.train.to_string()),
            ("validation_fraction", self.fractions.validation.to_string()),
            ("test_fraction", self.fractions.test.to_string()),
            ("h", m.h.to_string()),
            ("gamma", self.power_iters.to_string()),
            ("oversample", self.oversample.to_string()),
            ("svd_seed", self.svd_seed.to_string()),
            ("embedding_scale", self.embedding_scale.to_string()),
            ("d", m.d.to_string()),
            ("kappa", m.kappa.to_string()),
            ("alpha", m.alpha.to_string()),
            ("lambda", m.lambda.to_string()),
            ("rho", m.rho.to_string()),
            ("epochs", m.epochs.to_string()),
            ("seed", m.seed.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("optimizer", self.train.optimizer.to_string()),
            ("checkpoint_every", self.train.checkpoint_every.to_string()),
            ("eval_every", self.train.eval_every.to_string()),
            ("select_best", self.train.select_best.to_string()),
            ("ks", ks.join(",")),
            ("list_len", self.eval.list_len.map_or("auto".into(), |l| l.to_string())),
            ("nce", self.nce.to_string()),
        ]);
        lines
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Help text listing every key with its symbol.
pub fn keys_help() -> String {
    let mut out = String::from("Config keys (key = value, one per line, # comments):\n");
    for k in KEYS {
        let sym = k.symbol.map(|s| format!(" [{s}]")).unwrap_or_default();
        out.push_str(&format!("  {:<20}{:<5} {}\n", k.key, sym, k.help));
    }
    out.push_str("\nPresets: ");
    let names: Vec<_> = PRESETS.iter().map(|(n, _)| *n).collect();
    out.push_str(&names.join(", "));
    out.push('\n');
    out
}
