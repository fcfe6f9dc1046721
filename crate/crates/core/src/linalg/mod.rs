//! Dense row-major matrices, sparse-dense products and the randomized
//! truncated SVD that produces the fixed item embeddings.

mod embedding;
mod svd;

pub use embedding::{
    item_embeddings, load_embeddings, save_embeddings, EmbeddingMeta, EmbeddingScale,
    ItemEmbeddings,
};
pub use svd::{householder_qr, jacobi_svd, randomized_svd, SvdOptions, SvdResult};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};

// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "dense matrix data",
                rows * cols,
                data.len(),
            ));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::dims("dense matrix row", cols, bad.len()));
        }
        Ok(DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self · other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::dims(
                "matmul",
                format!("{} rows", self.cols),
                format!("{} rows", other.rows),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        let inner = self.cols;
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            let a = self.row(i);
            for (k, &a_ik) in a.iter().enumerate().take(inner) {
                if a_ik != 0.0 {
                    axpy(a_ik, other.row(k), out_row);
                }
            }
        };
        if self.rows * other.cols * inner >= PAR_THRESHOLD && other.cols > 0 {
            out.data
                .par_chunks_mut(other.cols)
                .enumerate()
                .for_each(kernel);
        } else if other.cols > 0 {
            out.data.chunks_mut(other.cols).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.transpose().matmul(other)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `R · X` for a binary sparse `R` (m×n) and dense `X` (n×k).
pub fn sparse_matmul(r: &InteractionMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if r.n_items() != x.rows() {
        return Err(Error::dims("sparse matmul", r.n_items(), x.rows()));
    }
    let k = x.cols();
    let mut out = DenseMatrix::zeros(r.n_users(), k);
    if k == 0 {
        return Ok(out);
    }
    out.data
        .par_chunks_mut(k)
        .enumerate()
        .for_each(|(u, out_row)| {
            for &j in r.row(u) {
                axpy(1.0, x.row(j as usize), out_row);
            }
        });
    Ok(out)
}

/// `Rᵀ · Y` for a binary sparse `R` (m×n) and dense `Y` (m×k).
pub fn sparse_t_matmul(r: &InteractionMatrix, y: &DenseMatrix) -> Result<DenseMatrix> {
    if r.n_users() != y.rows() {
        return Err(Error::dims("sparse transpose matmul", r.n_users(), y.rows()));
    }
    sparse_matmul(&transpose_pattern(r), y)
}

/// Item-major copy of the sparsity pattern.
pub fn transpose_pattern(r: &InteractionMatrix) -> InteractionMatrix {
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); r.n_items()];
    for u in 0..r.n_users() {
        for &j in r.row(u) {
            cols[j as usize].push(u);
        }
    }
    InteractionMatrix::from_rows(r.n_users(), cols).expect("indices in range")
}
