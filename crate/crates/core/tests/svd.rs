//! Randomized SVD against a dense reference decomposition.

use amarec::dataset::InteractionMatrix;
use amarec::linalg::{randomized_svd, DenseMatrix, SvdOptions};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn dense_singular_values(r: &InteractionMatrix) -> Vec<f64> {
    let m = DMatrix::from_fn(r.n_users(), r.n_items(), |u, j| {
        if r.contains(u, j) {
            1.0
        } else {
            0.0
        }
    });
    let mut s: Vec<f64> = m.svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

fn orthonormality_error(q: &DenseMatrix) -> f64 {
    q.t_matmul(q).unwrap().max_abs_diff(&DenseMatrix::identity(q.cols()))
}

fn to_dense(r: &InteractionMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(r.n_users(), r.n_items(), |u, j| if r.contains(u, j) { 1.0 } else { 0.0 })
}

fn sparse(m: usize, n: usize, bits: &[bool]) -> InteractionMatrix {
    InteractionMatrix::from_rows(
        n,
        (0..m).map(|u| (0..n).filter(|&j| bits[u * n + j]).collect::<Vec<usize>>()),
    )
    .unwrap()
}

fn matrix() -> impl Strategy<Value = InteractionMatrix> {
    (1usize..=32, 1usize..=32).prop_flat_map(|(m, n)| {
        proptest::collection::vec(proptest::bool::weighted(0.3), m * n).prop_map(move |b| sparse(m, n, &b))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spectrum_matches_dense_oracle(r in matrix(), rank_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let full = r.n_users().min(r.n_items());
        let rank = 1 + ((full - 1) as f64 * rank_frac) as usize;
        let opts = SvdOptions { seed, ..SvdOptions::new(rank, 10) };
        let svd = randomized_svd(&r, opts).unwrap();
        let want = dense_singular_values(&r);
        prop_assert_eq!(svd.singular_values.len(), rank);
        for (k, (got, w)) in svd.singular_values.iter().zip(&want).enumerate() {
            prop_assert!((got - w).abs() <= 1e-6, "σ{}: {} vs {}", k, got, w);
        }
        prop_assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(orthonormality_error(&svd.left) <= 1e-8);
        prop_assert!(orthonormality_error(&svd.right) <= 1e-8);
        if rank == full {
            prop_assert!(svd.reconstruct().max_abs_diff(&to_dense(&r)) <= 1e-8);
        }
    }

    #[test]
    fn block_spectra_converge_with_default_oversampling(
        sizes in proptest::collection::vec((1usize..=5, 1usize..=5), 1..=5),
        seed in any::<u64>(),
    ) {
        // disjoint all-ones blocks: σ = sqrt(rows·cols) per block
        let m: usize = sizes.iter().map(|s| s.0).sum();
        let n: usize = sizes.iter().map(|s| s.1).sum();
        let mut rows = Vec::new();
        let mut col = 0;
        for &(a, b) in &sizes {
            for _ in 0..a {
                rows.push((col..col + b).collect::<Vec<usize>>());
            }
            col += b;
        }
        let r = InteractionMatrix::from_rows(n, rows).unwrap();
        let rank = sizes.len().min(m.min(n));
        let svd = randomized_svd(&r, SvdOptions { seed, ..SvdOptions::new(rank, 10) }).unwrap();
        let want = dense_singular_values(&r);
        for (got, w) in svd.singular_values.iter().zip(&want) {
            prop_assert!((got - w).abs() <= 1e-6, "{} vs {}", got, w);
        }
        prop_assert!(orthonormality_error(&svd.right) <= 1e-8);
    }
}

#[test]
fn single_entry_has_unit_spectrum() {
    let r = InteractionMatrix::from_rows(4, [vec![], vec![2usize], vec![]]).unwrap();
    let svd = randomized_svd(&r, SvdOptions::new(2, 3)).unwrap();
    assert!((svd.singular_values[0] - 1.0).abs() < 1e-12);
    assert!(svd.singular_values[1].abs() < 1e-12);
    assert!((svd.right[(2, 0)] - 1.0).abs() < 1e-12);
}

#[test]
fn rank_bounds_are_checked() {
    let r = InteractionMatrix::from_rows(3, [vec![0usize, 1], vec![2]]).unwrap();
    assert!(randomized_svd(&r, SvdOptions::new(0, 1)).is_err());
    assert!(randomized_svd(&r, SvdOptions::new(3, 1)).is_err());
    assert!(randomized_svd(&r, SvdOptions::new(2, 1)).is_ok());
}
