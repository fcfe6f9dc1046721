//! Ranking metrics against exhaustive reference implementations.

use amarec::baselines::Scorer;
use amarec::dataset::{IdIndex, InteractionMatrix, Split, SplitDataset};
use amarec::eval::{
    evaluate, map_at_k, ndcg, precision_at_k, r_precision, rank_topk, recall_at_k, EvalOptions,
};
use proptest::prelude::*;

// Reference implementations. Each walks the ranked list position by
// position and recounts from scratch rather than sharing any helpers.

fn position(ranked: &[u32], item: u32) -> Option<usize> {
    ranked.iter().position(|&x| x == item)
}

fn oracle_hits(ranked: &[u32], relevant: &[u32], k: usize) -> usize {
    relevant
        .iter()
        .filter(|&&r| position(ranked, r).is_some_and(|p| p < k))
        .count()
}

fn oracle_precision(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    oracle_hits(ranked, relevant, k) as f64 / k as f64
}

fn oracle_recall(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    oracle_hits(ranked, relevant, k) as f64 / relevant.len() as f64
}

fn oracle_ap(ranked: &[u32], relevant: &[u32], k: usize) -> f64 {
    let mut sum = 0.0;
    for i in 1..=k.min(ranked.len()) {
        if relevant.contains(&ranked[i - 1]) {
            sum += oracle_hits(ranked, relevant, i) as f64 / i as f64;
        }
    }
    sum / k.min(relevant.len()) as f64
}

fn oracle_rprec(ranked: &[u32], relevant: &[u32]) -> f64 {
    oracle_hits(ranked, relevant, relevant.len()) as f64 / relevant.len() as f64
}

fn oracle_ndcg(ranked: &[u32], relevant: &[u32], cap: usize) -> f64 {
    let mut dcg = 0.0;
    for i in 1..=cap.min(ranked.len()) {
        if relevant.contains(&ranked[i - 1]) {
            dcg += 1.0 / ((i + 1) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for i in 1..=cap.min(relevant.len()) {
        idcg += 1.0 / ((i + 1) as f64).log2();
    }
    dcg / idcg
}

fn oracle_rank(scores: &[f64], exclude: &[u32], k: usize) -> Vec<u32> {
    let mut all: Vec<u32> = (0..scores.len() as u32).collect();
    all.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    all.into_iter().filter(|j| !exclude.contains(j)).take(k).collect()
}

fn fixture() -> impl Strategy<Value = (Vec<u32>, Vec<u32>, usize)> {
    (1usize..=10).prop_flat_map(|n| {
        let items: Vec<u32> = (0..n as u32).collect();
        (
            Just(items.clone()).prop_shuffle(),
            proptest::sample::subsequence(items, 1..=n),
            1usize..=5,
        )
    })
}

#[test]
fn worked_example() {
    let ranked = [10, 11, 12, 13, 14];
    let relevant = [10, 13, 99];
    assert_eq!(precision_at_k(&ranked, &relevant, 5), Some(0.4));
    assert_eq!(recall_at_k(&ranked, &relevant, 5), Some(2.0 / 3.0));
    assert_eq!(map_at_k(&ranked, &relevant, 5), Some(0.5));
    let n = ndcg(&ranked, &relevant, 5).unwrap();
    assert_eq!(n, oracle_ndcg(&ranked, &relevant, 5));
    let by_hand = (1.0 + 1.0 / 5f64.log2()) / (1.0 + 1.0 / 3f64.log2() + 0.5);
    assert!((n - by_hand).abs() < 1e-15);
    assert!((n - 0.6714).abs() < 5e-5);
}

#[test]
fn perfect_scorer_scores_one() {
    let relevant = [1, 4, 6, 7, 9];
    let scores: Vec<f64> = (0..10).map(|j| if relevant.contains(&j) { 1.0 } else { 0.0 }).collect();
    let ranked = rank_topk(0, &scores, &[], 10).items;
    for k in 1..=5 {
        assert_eq!(precision_at_k(&ranked, &relevant, k), Some(1.0));
        assert_eq!(map_at_k(&ranked, &relevant, k), Some(1.0));
    }
    assert_eq!(recall_at_k(&ranked, &relevant, 5), Some(1.0));
    assert_eq!(r_precision(&ranked, &relevant), Some(1.0));
    assert_eq!(ndcg(&ranked, &relevant, 10), Some(1.0));
}

proptest! {
    #[test]
    fn metrics_equal_oracle_bit_for_bit((ranked, relevant, k) in fixture()) {
        let rel = {
            let mut r = relevant.clone();
            r.sort_unstable();
            r
        };
        prop_assert_eq!(precision_at_k(&ranked, &rel, k).unwrap().to_bits(), oracle_precision(&ranked, &rel, k).to_bits());
        prop_assert_eq!(recall_at_k(&ranked, &rel, k).unwrap().to_bits(), oracle_recall(&ranked, &rel, k).to_bits());
        prop_assert_eq!(map_at_k(&ranked, &rel, k).unwrap().to_bits(), oracle_ap(&ranked, &rel, k).to_bits());
        prop_assert_eq!(r_precision(&ranked, &rel).unwrap().to_bits(), oracle_rprec(&ranked, &rel).to_bits());
        for cap in 1..=ranked.len() {
            prop_assert_eq!(ndcg(&ranked, &rel, cap).unwrap().to_bits(), oracle_ndcg(&ranked, &rel, cap).to_bits());
        }
    }

    #[test]
    fn metrics_are_bounded((ranked, relevant, k) in fixture()) {
        let mut rel = relevant;
        rel.sort_unstable();
        for v in [
            precision_at_k(&ranked, &rel, k),
            recall_at_k(&ranked, &rel, k),
            map_at_k(&ranked, &rel, k),
            r_precision(&ranked, &rel),
            ndcg(&ranked, &rel, k),
        ] {
            let v = v.unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn ranking_equals_full_sort(
        scores in proptest::collection::vec(prop_oneof![Just(0.5), Just(1.0), -3.0f64..3.0], 1..=10),
        exclude_mask in any::<u16>(),
        k in 0usize..12,
    ) {
        let exclude: Vec<u32> = (0..scores.len() as u32).filter(|j| exclude_mask >> j & 1 == 1).collect();
        let got = rank_topk(7, &scores, &[&exclude], k);
        prop_assert_eq!(got.user, 7);
        prop_assert_eq!(got.items, oracle_rank(&scores, &exclude, k));
    }
}

struct Fixed(Vec<Vec<f64>>);

impl Scorer for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }

    fn score(&self, user: usize, _history: &[u32]) -> Vec<f64> {
        self.0[user].clone()
    }
}

fn rows(n: usize, r: &[&[usize]]) -> InteractionMatrix {
    InteractionMatrix::from_rows(n, r.iter().map(|x| x.to_vec())).unwrap()
}

#[test]
fn evaluate_matches_per_user_oracle() {
    let n = 8;
    let data = SplitDataset {
        train: rows(n, &[&[0, 1], &[2], &[3, 4, 5], &[6]]),
        validation: rows(n, &[&[2], &[], &[6], &[0]]),
        test: rows(n, &[&[3, 7], &[0, 1, 5], &[], &[2, 7]]),
        users: IdIndex::sorted(["a", "b", "c", "d"]),
        items: IdIndex::sorted(["0", "1", "2", "3", "4", "5", "6", "7"]),
    };
    let scores: Vec<Vec<f64>> = (0..4)
        .map(|u| (0..n).map(|j| ((j * 5 + u * 3) % 7) as f64).collect())
        .collect();
    let scorer = Fixed(scores.clone());
    let opts = EvalOptions { ks: vec![1, 3], list_len: None };
    let report = evaluate(&scorer, &data, Split::Test, &opts).unwrap();
    assert_eq!(report.users, 3);

    let history = data.train.union(&data.validation).unwrap();
    let mut per_user = Vec::new();
    for u in [0, 1, 3] {
        let relevant = data.test.row(u);
        let ranked = oracle_rank(&scores[u], history.row(u), n);
        per_user.push(vec![
            oracle_rprec(&ranked, relevant),
            oracle_ndcg(&ranked, relevant, 3),
            oracle_ap(&ranked, relevant, 1),
            oracle_ap(&ranked, relevant, 3),
            oracle_precision(&ranked, relevant, 1),
            oracle_precision(&ranked, relevant, 3),
            oracle_recall(&ranked, relevant, 1),
            oracle_recall(&ranked, relevant, 3),
        ]);
    }
    for (c, name) in report.columns.iter().enumerate() {
        let mean = per_user.iter().map(|m| m[c]).sum::<f64>() / 3.0;
        assert_eq!(report.metrics[name].mean.to_bits(), mean.to_bits(), "{name}");
    }
    // history must exclude train and validation items from every list
    let val = evaluate(&scorer, &data, Split::Validation, &opts).unwrap();
    assert_eq!(val.users, 3);
    assert!(evaluate(&scorer, &data, Split::Train, &opts).is_err());
}
