mod common;

use common::*;
use patchlock::linalg::{condition_estimate, mat_inverse, mat_mul, Matrix};
use proptest::prelude::*;

#[test]
fn random_10x10_matches_triple_loop() {
    let a = gaussian_matrix(10, 10, 1);
    let b = gaussian_matrix(10, 10, 2);
    let got = mat_mul(&a, &b).unwrap();
    assert!(max_abs_diff_rows(&got, &naive_matmul(&a, &b)) <= 1e-12);
}

#[test]
fn rectangular_products_match_triple_loop() {
    for (i, (n, k, m)) in [(1, 7, 3), (32, 32, 32), (5, 1, 9), (17, 23, 4)].into_iter().enumerate() {
        let a = uniform_matrix(n, k, -1.0, 1.0, 10 + i as u64);
        let b = uniform_matrix(k, m, -1.0, 1.0, 20 + i as u64);
        let got = mat_mul(&a, &b).unwrap();
        assert_eq!(got.shape(), (n, m));
        assert!(max_abs_diff_rows(&got, &naive_matmul(&a, &b)) <= 1e-12);
    }
}

#[test]
fn gaussian_inverses_have_small_residual() {
    for seed in 0..20 {
        let n = 4 + (seed as usize % 5) * 11;
        let m = gaussian_matrix(n, n, 100 + seed);
        let inv = mat_inverse(&m).unwrap();
        let r = mat_mul(&m, &inv).unwrap().identity_residual().unwrap();
        assert!(r <= 1e-8, "n={n} residual {r}");
        // independent Gauss–Jordan oracle
        assert!(max_abs_diff_rows(&inv, &gauss_jordan_inverse(&m)) <= 1e-8 * m.norm_one().max(1.0));
    }
}

/// Modified Gram–Schmidt on the columns of a Gaussian matrix.
fn orthogonal(n: usize, seed: u64) -> Matrix {
    let g = gaussian_matrix(n, n, seed);
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| g.get(i, j)).collect()).collect();
    for j in 0..n {
        for k in 0..j {
            let dot: f64 = (0..n).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..n {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        cols[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut q = Matrix::zeros(n, n);
    for (j, col) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            q.set(i, j, *v);
        }
    }
    q
}

#[test]
fn condition_estimate_of_orthogonal_matrix() {
    for seed in 0..5 {
        let q = orthogonal(16, 300 + seed);
        let est = condition_estimate(&q).unwrap();
        let exact = q.norm_one() * norm_one_rows(&gauss_jordan_inverse(&q));
        // ||Q||_1 and ||Q^T||_1 are each at most sqrt(n)
        assert!(est <= 16.0 * (1.0 + 1e-9), "estimate {est}");
        assert!(est <= exact * (1.0 + 1e-9) && est >= exact / 10.0, "est {est} exact {exact}");
    }
}

#[test]
fn condition_estimate_within_factor_10_of_exact() {
    for seed in 0..30 {
        let n = 3 + seed as usize;
        let mut m = gaussian_matrix(n, n, 500 + seed);
        // skew a column to make some cases ill-conditioned
        if seed % 3 == 0 {
            for i in 0..n {
                let v = m.get(i, 0) * 1e-4 + m.get(i, 1);
                m.set(i, 0, v);
            }
        }
        let est = condition_estimate(&m).unwrap();
        let exact = m.norm_one() * norm_one_rows(&gauss_jordan_inverse(&m));
        assert!(est <= exact * (1.0 + 1e-8), "n={n}: estimate {est} above exact {exact}");
        assert!(est >= exact / 10.0, "n={n}: estimate {est} too far below exact {exact}");
    }
}

fn small_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..=1.0, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn triple() -> impl Strategy<Value = (Matrix, Matrix, Matrix)> {
    (1usize..=64, 1usize..=64, 1usize..=64, 1usize..=64)
        .prop_flat_map(|(a, b, c, d)| (small_matrix(a, b), small_matrix(b, c), small_matrix(c, d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mat_mul_is_associative((a, b, c) in triple()) {
        let left = mat_mul(&mat_mul(&a, &b).unwrap(), &c).unwrap();
        let right = mat_mul(&a, &mat_mul(&b, &c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-9);
    }

    #[test]
    fn mat_mul_matches_oracle(
        (a, b) in (1usize..=32, 1usize..=32, 1usize..=32)
            .prop_flat_map(|(n, k, m)| (small_matrix(n, k), small_matrix(k, m)))
    ) {
        let got = mat_mul(&a, &b).unwrap();
        prop_assert!(max_abs_diff_rows(&got, &naive_matmul(&a, &b)) <= 1e-12);
    }
}
