//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use schatten_bounds::spectral::Matrix;

/// Singular values as square roots of the Gram matrix eigenvalues, descending.
pub fn gram_singular_values(m: &Matrix) -> Vec<f64> {
    let a = m.as_dmatrix();
    let g = if a.nrows() <= a.ncols() { a * a.transpose() } else { a.transpose() * a };
    let mut v: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().map(|e| e.max(0.0).sqrt()).collect();
    v.sort_by(|x, y| y.total_cmp(x));
    v
}

/// Compensated sum of sigma_i^p over positive values, accumulated smallest first.
pub fn direct_schatten_power(sigma: &[f64], p: f64) -> f64 {
    let mut terms: Vec<f64> = sigma.iter().filter(|s| **s > 0.0).map(|s| s.powf(p)).collect();
    terms.sort_by(f64::total_cmp);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for t in terms {
        let y = t - comp;
        let s = sum + y;
        comp = (s - sum) - y;
        sum = s;
    }
    sum
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_dmatrix(DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Path of the command-line binary built for the integration tests.
pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_schatten-bounds")
}
