//! Interpretability reports over a trained [`AmaScorer`].
//!
//! Three views are produced: the attention and mode attribution behind a
//! single user's recommendations, a histogram of how many distinct modes a
//! user's top-K list draws from, and the items that collect the most
//! attention per mode across all users.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{IdIndex, InteractionMatrix};
use crate::error::{Error, Result};
use crate::eval::rank_topk;
use crate::model::{decode_maxout, per_mode_scores, AmaScorer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttendedItem {
    pub item: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub item: u32,
    pub score: f64,
    /// Mode whose score the maxout decoder selected.
    pub mode: usize,
    /// Score of this item under every mode.
    pub mode_scores: Vec<f64>,
    /// Set when a ground-truth row was supplied and contains the item.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hit: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserExplanation {
    pub user: usize,
    /// `attention[l]` lists every observed item with mode `l`'s weight on it.
    pub attention: Vec<Vec<AttendedItem>>,
    pub recommendations: Vec<Recommendation>,
}

impl UserExplanation {
    /// Marks each recommendation as a hit or miss against `relevant` (sorted).
    pub fn mark_hits(&mut self, relevant: &[u32]) {
        for r in &mut self.recommendations {
            r.hit = Some(relevant.binary_search(&r.item).is_ok());
        }
    }

    pub fn to_json(&self, items: &IdIndex) -> Result<String> {
        let named = serde_json::json!({
            "user": self.user,
            "attention": self.attention.iter().map(|mode| {
                mode.iter().map(|a| serde_json::json!({
                    "item": a.item,
                    "item_id": items.id(a.item as usize),
                    "weight": a.weight,
                })).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
            "recommendations": self.recommendations.iter().map(|r| {
                let mut v = serde_json::to_value(r).expect("plain struct");
                v["item_id"] = items.id(r.item as usize).into();
                v
            }).collect::<Vec<_>>(),
        });
        Ok(serde_json::to_string_pretty(&named)? + "\n")
    }

    /// Graphviz source with observed items, modes and recommendations as
    /// three columns. Hits are drawn in red.
    pub fn to_dot(&self, items: &IdIndex) -> String {
        let esc = |s: &str| s.replace('\\', "\\\\").replace('"', "\\\"");
        let mut out = String::from("digraph explanation {\n  rankdir=LR;\n  node [shape=box];\n");
        out.push_str("  subgraph cluster_history { label=\"history\";\n");
        if let Some(first) = self.attention.first() {
            for a in first {
                out.push_str(&format!(
                    "    h{} [label=\"{}\"];\n",
                    a.item,
                    esc(items.id(a.item as usize))
                ));
            }
        }
        out.push_str("  }\n  subgraph cluster_modes { label=\"modes\";\n");
        for l in 0..self.attention.len() {
            out.push_str(&format!("    m{l} [label=\"mode {l}\", shape=ellipse];\n"));
        }
        out.push_str("  }\n  subgraph cluster_recs { label=\"recommendations\";\n");
        for r in &self.recommendations {
            let color = if r.hit == Some(true) { ", color=red, fontcolor=red" } else { "" };
            out.push_str(&format!(
                "    r{} [label=\"{}\"{color}];\n",
                r.item,
                esc(items.id(r.item as usize))
            ));
        }
        out.push_str("  }\n");
        for (l, mode) in self.attention.iter().enumerate() {
            for a in mode {
                out.push_str(&format!(
                    "  h{} -> m{l} [penwidth={:.3}, label=\"{:.3}\"];\n",
                    a.item,
                    0.5 + 4.0 * a.weight,
                    a.weight
                ));
            }
        }
        for r in &self.recommendations {
            out.push_str(&format!("  m{} -> r{};\n", r.mode, r.item));
        }
        out.push_str("}\n");
        out
    }
}

/// Attention over `history` and the mode behind each of the top `k`
/// recommendations (history items excluded).
pub fn explain_user(
    scorer: &AmaScorer,
    user: usize,
    history: &[u32],
    k: usize,
) -> Result<UserExplanation> {
    if history.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let enc = scorer.encode(history)?;
    let dec = &scorer.params().decoder;
    let pred = decode_maxout(&enc.modes, dec);
    let per_mode = per_mode_scores(&enc.modes, dec);
    let attention = (0..enc.attention.rows())
        .map(|l| {
            history
                .iter()
                .zip(enc.attention.row(l))
                .map(|(&item, &weight)| AttendedItem { item, weight })
                .collect()
        })
        .collect();
    let ranked = rank_topk(user, &pred.scores, &[history], k);
    let recommendations = ranked
        .items
        .iter()
        .map(|&j| Recommendation {
            item: j,
            score: pred.scores[j as usize],
            mode: pred.mode_of[j as usize],
            mode_scores: per_mode.column(j as usize),
            hit: None,
        })
        .collect();
    Ok(UserExplanation {
        user,
        attention,
        recommendations,
    })
}

/// `counts[i]` is the number of users whose top-K list uses exactly `i + 1`
/// distinct modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeUsageHistogram {
    pub k: usize,
    pub counts: Vec<usize>,
}

impl ModeUsageHistogram {
    pub fn users(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Share of users whose list draws from at least `modes` modes.
    pub fn fraction_at_least(&self, modes: usize) -> f64 {
        let total = self.users();
        if total == 0 {
            return 0.0;
        }
        let above: usize = self.counts.iter().skip(modes.saturating_sub(1)).sum();
        above as f64 / total as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("modes_used,users\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{c}\n", i + 1));
        }
        out
    }
}

/// Number of distinct source modes among one user's top `k` recommendations.
pub fn modes_used(scorer: &AmaScorer, user: usize, history: &[u32], k: usize) -> usize {
    let pred = scorer.predict(history);
    let ranked = rank_topk(user, &pred.scores, &[history], k);
    let mut seen = vec![false; scorer.params().d()];
    for &j in &ranked.items {
        seen[pred.mode_of[j as usize]] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

/// Histogram of [`modes_used`] over every user with a nonempty history row.
pub fn mode_usage(scorer: &AmaScorer, history: &InteractionMatrix, k: usize) -> ModeUsageHistogram {
    let d = scorer.params().d();
    let used: Vec<usize> = (0..history.n_users())
        .into_par_iter()
        .filter(|&u| !history.row(u).is_empty())
        .map(|u| modes_used(scorer, u, history.row(u), k))
        .collect();
    let mut counts = vec![0; d];
    for m in used.into_iter().filter(|&m| m > 0) {
        counts[m - 1] += 1;
    }
    ModeUsageHistogram { k, counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopItem {
    pub item: u32,
    pub aggregated_attention: f64,
    /// 1-based rank by train interaction count, ties to the lower index.
    pub popularity_rank: usize,
    pub popularity_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTopItems {
    pub modes: Vec<Vec<TopItem>>,
}

impl ModeTopItems {
    pub fn to_csv(&self, items: &IdIndex) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "mode",
            "rank",
            "item_id",
            "aggregated_attention",
            "popularity_rank",
            "popularity_count",
        ])?;
        for (l, list) in self.modes.iter().enumerate() {
            for (r, t) in list.iter().enumerate() {
                w.write_record([
                    l.to_string(),
                    (r + 1).to_string(),
                    items.id(t.item as usize).to_string(),
                    t.aggregated_attention.to_string(),
                    t.popularity_rank.to_string(),
                    t.popularity_count.to_string(),
                ])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Format(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }
}

/// Attention each mode places on each item, summed over all users (d×n,
/// row-major).
pub fn aggregate_attention(scorer: &AmaScorer, history: &InteractionMatrix) -> Result<Vec<Vec<f64>>> {
    let d = scorer.params().d();
    let n = history.n_items();
    let per_user: Vec<_> = (0..history.n_users())
        .into_par_iter()
        .filter(|&u| !history.row(u).is_empty())
        .map(|u| scorer.encode(history.row(u)))
        .collect::<Result<_>>()?;
    let mut agg = vec![vec![0.0; n]; d];
    for enc in &per_user {
        for (l, row) in agg.iter_mut().enumerate() {
            for (&j, &a) in enc.obs.iter().zip(enc.attention.row(l)) {
                row[j as usize] += a;
            }
        }
    }
    Ok(agg)
}

/// 1-based popularity rank of every item; ties go to the lower index.
pub fn popularity_ranks(counts: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut rank = vec![0; counts.len()];
    for (r, &j) in order.iter().enumerate() {
        rank[j] = r + 1;
    }
    rank
}

/// The `top_n` items with the largest aggregated attention in each mode,
/// annotated with their popularity in `history`.
pub fn mode_top_items(scorer: &AmaScorer, history: &InteractionMatrix, top_n: usize) -> Result<ModeTopItems> {
    let agg = aggregate_attention(scorer, history)?;
    let counts = history.item_counts();
    let ranks = popularity_ranks(&counts);
    let modes = agg
        .iter()
        .map(|row| {
            let ranked = rank_topk(0, row, &[], top_n);
            ranked
                .items
                .into_iter()
                .map(|j| TopItem {
                    item: j,
                    aggregated_attention: row[j as usize],
                    popularity_rank: ranks[j as usize],
                    popularity_count: counts[j as usize],
                })
                .collect()
        })
        .collect();
    Ok(ModeTopItems { modes })
}
