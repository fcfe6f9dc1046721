//! Top-N ranking evaluation.
//!
//! For every user with a nonempty relevant set in the target split, the
//! scorer ranks all items outside the user's history (train for
//! validation, train ∪ validation for test) and the list is scored with
//! the metrics below. Ties in score go to the lower item index.
//!
//! | metric | definition |
//! | ------ | ---------- |
//! | Precision@K | hits in top K / K |
//! | Recall@K | hits in top K / \|relevant\| |
//! | MAP@K | Σ over hit ranks i ≤ K of precision@i, / min(K, \|relevant\|) |
//! | R-Precision | hits in top R / R, R = \|relevant\| |
//! | NDCG | binary-gain DCG over the list / ideal DCG |

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::Scorer;
use crate::dataset::{Split, SplitDataset};
use crate::error::{Error, Result};

/// Recommendations for one user, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<u32>,
}

fn by_score_desc(scores: &[f64]) -> impl Fn(&u32, &u32) -> Ordering + '_ {
    move |&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    }
}

/// The `k` best-scoring items not present in any of the `exclude` rows.
pub fn rank_topk(user: usize, scores: &[f64], exclude: &[&[u32]], k: usize) -> RankedList {
    let mut banned = vec![false; scores.len()];
    for row in exclude {
        for &j in row.iter() {
            banned[j as usize] = true;
        }
    }
    let mut items: Vec<u32> = (0..scores.len() as u32)
        .filter(|&j| !banned[j as usize])
        .collect();
    let cmp = by_score_desc(scores);
    if k == 0 {
        items.clear();
    } else if k < items.len() {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(&cmp);
    RankedList { user, items }
}

fn is_hit(relevant: &[u32], item: u32) -> bool {
    relevant.binary_search(&item).is_ok()
}

fn hits_in_top(ranked: &[u32], relevant: &[u32], k: usize) -> usize {
    ranked.iter().take(k).filter(|&&j| is_hit(relevant, j)).count()
}

/// `None` when `relevant` is empty. `relevant` must be sorted.
pub fn precision_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    (!relevant.is_empty() && k > 0).then(|| hits_in_top(ranked, relevant, k) as f64 / k as f64)
}

pub fn recall_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    (!relevant.is_empty())
        .then(|| hits_in_top(ranked, relevant, k) as f64 / relevant.len() as f64)
}

/// Truncated average precision, normalized by `min(k, |relevant|)`.
pub fn map_at_k(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &j) in ranked.iter().take(k).enumerate() {
        if is_hit(relevant, j) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / k.min(relevant.len()) as f64)
}

pub fn r_precision(ranked: &[u32], relevant: &[u32]) -> Option<f64> {
    let r = relevant.len();
    (r > 0).then(|| hits_in_top(ranked, relevant, r) as f64 / r as f64)
}

/// Binary-gain NDCG over the first `cap` ranks.
pub fn ndcg(ranked: &[u32], relevant: &[u32], cap: usize) -> Option<f64> {
    if relevant.is_empty() || cap == 0 {
        return None;
    }
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let dcg = ranked
        .iter()
        .take(cap)
        .enumerate()
        .filter(|(_, &j)| is_hit(relevant, j))
        .fold(0.0, |acc, (i, _)| acc + discount(i));
    let idcg = (0..cap.min(relevant.len())).fold(0.0, |acc, i| acc + discount(i));
    Some(dcg / idcg)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    /// Ranks counted by NDCG; defaults to the largest K.
    pub list_len: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            ks: vec![5, 10, 20],
            list_len: None,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::Config(format!(
                "Ks must be a nonempty list of positive integers, got {:?}",
                self.ks
            )));
        }
        if self.list_len == Some(0) {
            return Err(Error::Config("list length must be positive".into()));
        }
        Ok(())
    }

    pub fn list_len(&self) -> usize {
        self.list_len
            .unwrap_or_else(|| self.ks.iter().copied().max().unwrap_or(0))
    }

    /// Column names in report order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols = vec!["R-Precision".to_string(), "NDCG".to_string()];
        for prefix in ["MAP", "Precision", "Recall"] {
            cols.extend(self.ks.iter().map(|k| format!("{prefix}@{k}")));
        }
        cols
    }
}

/// All metric values of one user, in [`EvalOptions::columns`] order.
pub fn user_metrics(ranked: &[u32], relevant: &[u32], opts: &EvalOptions) -> Option<Vec<f64>> {
    let mut out = vec![
        r_precision(ranked, relevant)?,
        ndcg(ranked, relevant, opts.list_len())?,
    ];
    for &k in &opts.ks {
        out.push(map_at_k(ranked, relevant, k)?);
    }
    for &k in &opts.ks {
        out.push(precision_at_k(ranked, relevant, k)?);
    }
    for &k in &opts.ks {
        out.push(recall_at_k(ranked, relevant, k)?);
    }
    Some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub ci: f64,
}

/// Mean and 1.96·stderr of a sample; the interval is 0 for fewer than two values.
pub fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len();
    if n == 0 {
        return MetricSummary { mean: 0.0, ci: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return MetricSummary { mean, ci: 0.0 };
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    MetricSummary {
        mean,
        ci: 1.96 * (var / n as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub model: String,
    pub split: Split,
    pub ks: Vec<usize>,
    pub list_len: usize,
    pub users: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_hash: Option<String>,
    pub columns: Vec<String>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl RankingReport {
    pub fn get(&self, metric: &str) -> Option<MetricSummary> {
        self.metrics.get(metric).copied()
    }

    pub fn means(&self) -> BTreeMap<String, f64> {
        self.metrics
            .iter()
            .map(|(k, v)| (k.clone(), v.mean))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Percentages, one column per metric, laid out like a results table.
    pub fn to_table(&self) -> String {
        let mut header = String::from("Model");
        let mut row = self.model.clone();
        let mut ci = String::from("95% CI");
        for col in &self.columns {
            let m = self.metrics[col];
            let _ = write!(header, "\t{col}");
            let _ = write!(row, "\t{:.2}%", 100.0 * m.mean);
            let _ = write!(ci, "\t±{:.2}%", 100.0 * m.ci);
        }
        format!("{header}\n{row}\n{ci}\n")
    }
}

/// Ranks and scores every user with a nonempty relevant set in `split`.
pub fn evaluate(
    scorer: &dyn Scorer,
    data: &SplitDataset,
    split: Split,
    opts: &EvalOptions,
) -> Result<RankingReport> {
    opts.validate()?;
    if split == Split::Train {
        return Err(Error::Config("evaluate on validation or test".into()));
    }
    let history = data.history_for(split)?;
    let target = data.matrix(split);
    let list_len = opts.list_len();

    let per_user: Vec<Vec<f64>> = (0..data.n_users())
        .into_par_iter()
        .filter_map(|u| {
            let relevant = target.row(u);
            if relevant.is_empty() {
                return None;
            }
            let seen = history.row(u);
            let scores = scorer.score(u, seen);
            let depth = list_len.max(relevant.len()).max(opts.ks.iter().copied().max().unwrap_or(0));
            let ranked = rank_topk(u, &scores, &[seen], depth);
            user_metrics(&ranked.items, relevant, opts)
        })
        .collect();

    let columns = opts.columns();
    let mut metrics = BTreeMap::new();
    for (c, name) in columns.iter().enumerate() {
        let values: Vec<f64> = per_user.iter().map(|m| m[c]).collect();
        metrics.insert(name.clone(), summarize(&values));
    }
    Ok(RankingReport {
        model: scorer.name().to_string(),
        split,
        ks: opts.ks.clone(),
        list_len,
        users: per_user.len(),
        model_hash: None,
        columns,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        let s = [0.1, 0.9, 0.5];
        assert_eq!(rank_topk(0, &s, &[], 2).items, vec![1, 2]);
        assert_eq!(rank_topk(0, &s, &[&[1]], 2).items, vec![2, 0]);
        let tie = [0.5, 0.1, 0.5];
        assert_eq!(rank_topk(0, &tie, &[], 3).items, vec![0, 2, 1]);
        assert_eq!(rank_topk(0, &s, &[&[0, 1, 2]], 2).items, Vec::<u32>::new());
        assert_eq!(rank_topk(0, &s, &[], 10).items.len(), 3);
    }

    #[test]
    fn worked_example() {
        // hits at ranks 1 and 4 of top-5, three relevant items
        let ranked = [10, 11, 12, 13, 14];
        let relevant = [10, 13, 99];
        assert_eq!(precision_at_k(&ranked, &relevant, 5), Some(0.4));
        assert_eq!(recall_at_k(&ranked, &relevant, 5), Some(2.0 / 3.0));
        assert_eq!(map_at_k(&ranked, &relevant, 5), Some(0.5));
        let n = ndcg(&ranked, &relevant, 5).unwrap();
        assert!((n - 0.6714).abs() < 5e-5, "{n}");
        assert_eq!(r_precision(&ranked, &relevant), Some(1.0 / 3.0));
    }

    #[test]
    fn boundary_values() {
        let ranked = [1, 2, 3];
        assert_eq!(precision_at_k(&ranked, &[1, 2, 3, 4], 3), Some(1.0));
        assert_eq!(map_at_k(&ranked, &[1, 2, 3, 4], 3), Some(1.0));
        assert_eq!(ndcg(&ranked, &[1, 2], 3), Some(1.0));
        assert_eq!(r_precision(&ranked, &[1, 2, 3]), Some(1.0));
        for f in [
            precision_at_k(&ranked, &[7], 3),
            recall_at_k(&ranked, &[7], 3),
            map_at_k(&ranked, &[7], 3),
            ndcg(&ranked, &[7], 3),
            r_precision(&ranked, &[7]),
        ] {
            assert_eq!(f, Some(0.0));
        }
        assert_eq!(precision_at_k(&ranked, &[], 3), None);
        assert_eq!(ndcg(&ranked, &[], 3), None);
    }

    #[test]
    fn summary_of_single_value_has_zero_ci() {
        assert_eq!(summarize(&[0.25]), MetricSummary { mean: 0.25, ci: 0.0 });
        let s = summarize(&[0.0, 1.0]);
        assert_eq!(s.mean, 0.5);
        assert!((s.ci - 1.96 * 0.5).abs() < 1e-12);
    }

    #[test]
    fn columns_follow_table_layout() {
        let cols = EvalOptions::default().columns();
        assert_eq!(cols.len(), 11);
        assert_eq!(&cols[..3], ["R-Precision", "NDCG", "MAP@5"]);
        assert_eq!(cols[10], "Recall@20");
        assert!(EvalOptions { ks: vec![], list_len: None }.validate().is_err());
    }
}
