//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use patchlock::linalg::Matrix;
use patchlock::rng::{uniform, Gaussian};
use patchlock::ImageTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut g = Gaussian::new(rng(seed));
    Matrix::new(rows, cols, (0..rows * cols).map(|_| g.sample()).collect()).unwrap()
}

pub fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut r = rng(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| lo + (hi - lo) * uniform(&mut r)).collect()).unwrap()
}

pub fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
    let mut r = rng(seed);
    ImageTensor::new(h, w, c, (0..h * w * c).map(|_| uniform(&mut r)).collect()).unwrap()
}

/// Textbook i-j-k triple loop.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Vec<Vec<f64>> {
    assert_eq!(a.cols(), b.rows());
    let mut out = vec![vec![0.0; b.cols()]; a.rows()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut s = 0.0;
            for k in 0..a.cols() {
                s += a.get(i, k) * b.get(k, j);
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn max_abs_diff_rows(m: &Matrix, rows: &[Vec<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d = d.max((m.get(i, j) - v).abs());
        }
    }
    d
}

/// Gauss–Jordan inverse with full row swaps on a `Vec<Vec<f64>>`.
pub fn gauss_jordan_inverse(m: &Matrix) -> Vec<Vec<f64>> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = m.row(i).to_vec();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        assert!(p.abs() > 1e-300, "singular");
        for v in a[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    let pivot_row = a[col].clone();
                    for (v, pv) in a[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    a.into_iter().map(|row| row[n..].to_vec()).collect()
}

pub fn norm_one_rows(rows: &[Vec<f64>]) -> f64 {
    let n = rows.first().map_or(0, |r| r.len());
    (0..n).map(|j| rows.iter().map(|r| r[j].abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Pearson correlation.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}
