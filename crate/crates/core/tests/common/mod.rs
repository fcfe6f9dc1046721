#![allow(dead_code)]

use amarec::dataset::{temporal_split, RatingEvent, SplitDataset, SplitFractions};
use amarec::linalg::{item_embeddings, randomized_svd, EmbeddingScale, ItemEmbeddings, SvdOptions};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Users with two or three tastes, each taste a block of items. Within a
/// block lower indices are more popular.
pub fn multi_taste_events(users: usize, items: usize, tastes: usize, seed: u64) -> Vec<RatingEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block = items / tastes;
    let all: Vec<usize> = (0..tastes).collect();
    let mut out = Vec::new();
    for u in 0..users {
        let k = rng.random_range(2..=3.min(tastes));
        let mine: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
        let count = rng.random_range(12..30);
        for t in 0..count {
            let g = mine[rng.random_range(0..mine.len())];
            // squared uniform skews toward the head of the block
            let x: f64 = rng.random();
            let j = g * block + ((x * x) * block as f64) as usize;
            out.push(RatingEvent {
                user: u.to_string(),
                item: j.to_string(),
                rating: 1.0,
                timestamp: t as u64 * 10 + rng.random_range(0..10),
            });
        }
    }
    out
}

pub fn multi_taste(users: usize, items: usize, tastes: usize, seed: u64) -> SplitDataset {
    temporal_split(&multi_taste_events(users, items, tastes, seed), SplitFractions::default()).unwrap()
}

pub fn embeddings(data: &SplitDataset, h: usize) -> ItemEmbeddings {
    let svd = randomized_svd(&data.train, SvdOptions::new(h, 10)).unwrap();
    item_embeddings(&svd, EmbeddingScale::None)
}
