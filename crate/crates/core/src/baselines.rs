//! Reference scorers: item popularity and PureSVD.

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, randomized_svd, DenseMatrix, SvdOptions};

/// Maps a user's history row to one score per item.
pub trait Scorer: Sync {
    fn name(&self) -> &str;

    /// `history` holds the user's observed item indices in ascending order.
    fn score(&self, user: usize, history: &[u32]) -> Vec<f64>;
}

/// Scores every item by its train interaction count, identically for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct PopScorer {
    counts: Vec<f64>,
}

impl PopScorer {
    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

pub fn pop_scorer(train: &InteractionMatrix) -> Result<PopScorer> {
    if train.nnz() == 0 {
        return Err(Error::EmptyDataset("POP needs at least one train interaction".into()));
    }
    Ok(PopScorer {
        counts: train.item_counts().into_iter().map(|c| c as f64).collect(),
    })
}

impl Scorer for PopScorer {
    fn name(&self) -> &str {
        "POP"
    }

    fn score(&self, _user: usize, _history: &[u32]) -> Vec<f64> {
        self.counts.clone()
    }
}

/// Item-item similarity `V Vᵀ` from a truncated SVD of the train matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PureSvdScorer {
    right: DenseMatrix,
}

impl PureSvdScorer {
    pub fn right_factor(&self) -> &DenseMatrix {
        &self.right
    }
}

pub fn puresvd_scorer(
    train: &InteractionMatrix,
    rank: usize,
    power_iters: usize,
    seed: u64,
) -> Result<PureSvdScorer> {
    let svd = randomized_svd(
        train,
        SvdOptions {
            seed,
            ..SvdOptions::new(rank, power_iters)
        },
    )?;
    Ok(PureSvdScorer { right: svd.right })
}

impl Scorer for PureSvdScorer {
    fn name(&self) -> &str {
        "PureSVD"
    }

    /// `r · V · Vᵀ`
    fn score(&self, _user: usize, history: &[u32]) -> Vec<f64> {
        let h = self.right.cols();
        let mut latent = vec![0.0; h];
        for &j in history {
            for (z, v) in latent.iter_mut().zip(self.right.row(j as usize)) {
                *z += v;
            }
        }
        (0..self.right.rows())
            .map(|j| dot(&latent, self.right.row(j)))
            .collect()
    }
}
