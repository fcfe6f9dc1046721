use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{axpy, dot, sparse_matmul, sparse_t_matmul, DenseMatrix};
use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};

/// Settings for [`randomized_svd`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SvdOptions {
    /// Target rank `h`.
    pub rank: usize,
    /// Power iterations `γ`.
    pub power_iters: usize,
    /// Extra random probes beyond `rank`.
    pub oversample: usize,
    pub seed: u64,
}

impl SvdOptions {
    pub fn new(rank: usize, power_iters: usize) -> Self {
        SvdOptions {
            rank,
            power_iters,
            oversample: 10,
            seed: 0,
        }
    }
}

/// Truncated factorization `R ≈ left · diag(singular_values) · rightᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// m×h, orthonormal columns.
    pub left: DenseMatrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// n×h, orthonormal columns.
    pub right: DenseMatrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        let mut scaled = self.left.clone();
        for i in 0..scaled.rows() {
            for (x, s) in scaled.row_mut(i).iter_mut().zip(&self.singular_values) {
                *x *= s;
            }
        }
        scaled
            .matmul(&self.right.transpose())
            .expect("factor shapes agree")
    }
}

/// Rank-`h` SVD of a binary interaction matrix by Gaussian range finding.
///
/// Draws `h + oversample` Gaussian probes (capped at `min(m, n)`), runs
/// `power_iters` rounds of `(R Rᵀ)` subspace iteration with a QR after every
/// product, then solves the small projected problem exactly with one-sided
/// Jacobi. Each right singular vector is signed so its largest-magnitude
/// entry is positive.
pub fn randomized_svd(r: &InteractionMatrix, opts: SvdOptions) -> Result<SvdResult> {
    let (m, n) = (r.n_users(), r.n_items());
    let max_rank = m.min(n);
    if opts.rank == 0 || opts.rank > max_rank {
        return Err(Error::RankOutOfRange {
            rank: opts.rank,
            max: max_rank,
        });
    }
    let probes = (opts.rank + opts.oversample).min(max_rank);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let omega = DenseMatrix::from_fn(n, probes, |_, _| StandardNormal.sample(&mut rng));

    let mut q = householder_qr(&sparse_matmul(r, &omega)?);
    for _ in 0..opts.power_iters {
        let z = householder_qr(&sparse_t_matmul(r, &q)?);
        q = householder_qr(&sparse_matmul(r, &z)?);
    }

    // Projected problem: B = Qᵀ R, stored as its rows (probes × n).
    let b = sparse_t_matmul(r, &q)?.transpose();
    let small = jacobi_svd(&b);

    let h = opts.rank;
    let left = q.matmul(&small.left)?;
    let mut result = SvdResult {
        left: take_columns(&left, h),
        singular_values: small.singular_values[..h].to_vec(),
        right: take_columns(&small.right, h),
    };
    fix_signs(&mut result);
    Ok(result)
}

fn take_columns(a: &DenseMatrix, k: usize) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), k, |i, j| a[(i, j)])
}

fn fix_signs(svd: &mut SvdResult) {
    for k in 0..svd.rank() {
        let col = svd.right.column(k);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            for i in 0..svd.right.rows() {
                svd.right[(i, k)] = -svd.right[(i, k)];
            }
            for i in 0..svd.left.rows() {
                svd.left[(i, k)] = -svd.left[(i, k)];
            }
        }
    }
}

/// Thin Q factor of a tall `m × k` matrix (m ≥ k) via Householder reflections.
///
/// Columns of Q are orthonormal even when the input is rank deficient.
pub fn householder_qr(a: &DenseMatrix) -> DenseMatrix {
    let (m, k) = a.shape();
    assert!(m >= k, "householder_qr expects a tall matrix, got {m}x{k}");
    // Work column-major: cols[c] is column c.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|c| a.column(c)).collect();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);

    for c in 0..k {
        let x = &cols[c][c..];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        if norm > 0.0 {
            let alpha = if v[0] >= 0.0 { -norm } else { norm };
            v[0] -= alpha;
        }
        let vnorm = dot(&v, &v).sqrt();
        if vnorm > 0.0 {
            v.iter_mut().for_each(|x| *x /= vnorm);
            for col in cols.iter_mut().skip(c) {
                let tail = &mut col[c..];
                let s = 2.0 * dot(&v, tail);
                axpy(-s, &v, tail);
            }
        }
        reflectors.push(v);
    }

    // Q = H_0 H_1 ... H_{k-1} applied to the first k columns of I.
    let mut q_cols: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut e = vec![0.0; m];
            e[c] = 1.0;
            e
        })
        .collect();
    for c in (0..k).rev() {
        let v = &reflectors[c];
        if v.iter().all(|x| *x == 0.0) {
            continue;
        }
        for col in q_cols.iter_mut() {
            let tail = &mut col[c..];
            let s = 2.0 * dot(v, tail);
            axpy(-s, v, tail);
        }
    }
    DenseMatrix::from_fn(m, k, |i, j| q_cols[j][i])
}

/// Full SVD of a short `k × n` matrix (k ≤ n) by one-sided Jacobi rotations.
///
/// Returns `left` (k×k), singular values (length k, descending) and `right`
/// (n×k) with orthonormal columns; directions for zero singular values are
/// completed to an orthonormal set.
pub fn jacobi_svd(b: &DenseMatrix) -> SvdResult {
    let (k, n) = b.shape();
    assert!(k <= n, "jacobi_svd expects a short matrix, got {k}x{n}");
    // Rows of `w` are the columns of Bᵀ being orthogonalized.
    let mut w: Vec<Vec<f64>> = (0..k).map(|i| b.row(i).to_vec()).collect();
    let mut rot: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            e
        })
        .collect();

    const TOL: f64 = 1e-15;
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                if gamma == 0.0 || gamma.abs() <= TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut rot, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma: Vec<(f64, usize)> = w
        .iter()
        .enumerate()
        .map(|(i, row)| (dot(row, row).sqrt(), i))
        .collect();
    sigma.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let smax = sigma.first().map_or(0.0, |s| s.0);
    let cutoff = smax * (n as f64) * f64::EPSILON;

    let mut right_cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for &(s, i) in &sigma {
        if s > cutoff && s > 0.0 {
            right_cols.push(w[i].iter().map(|x| x / s).collect());
            values.push(s);
        } else {
            values.push(0.0);
        }
    }
    complete_basis(&mut right_cols, n, k);

    // rot is orthogonal; its rows (as built) are the columns of J.
    let left = DenseMatrix::from_fn(k, k, |i, j| rot[sigma[j].1][i]);
    let right = DenseMatrix::from_fn(n, k, |i, j| right_cols[j][i]);
    SvdResult {
        left,
        singular_values: values,
        right,
    }
}

fn rotate(rows: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = rows.split_at_mut(q);
    let (a, b) = (&mut head[p], &mut tail[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Extends orthonormal `cols` (each of length `dim`) to `target` columns
/// using Gram–Schmidt on standard basis vectors.
fn complete_basis(cols: &mut Vec<Vec<f64>>, dim: usize, target: usize) {
    let mut e = 0;
    while cols.len() < target && e < dim {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in cols.iter() {
                let proj = dot(c, &v);
                axpy(-proj, c, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
}
