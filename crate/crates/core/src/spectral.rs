//! Dense singular values and every matrix-norm quantity used by the bounds.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, input, Result};

/// Dense real matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a matrix from row-major entries.
    pub fn from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(input(format!("matrix dimensions must be positive, got {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(input(format!("expected {} entries for a {rows}x{cols} matrix, got {}", rows * cols, entries.len())));
        }
        Self::from_dmatrix(DMatrix::from_row_slice(rows, cols, entries))
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(input("matrix dimensions must be positive"));
        }
        if let Some(pos) = m.iter().position(|x| !x.is_finite()) {
            let (r, c) = (pos % m.nrows(), pos / m.nrows());
            return Err(input(format!("non-finite entry at ({r}, {c})")));
        }
        Ok(Matrix(m))
    }

    /// Wraps the product of finite matrices; callers guarantee finiteness.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|x| x.is_finite()));
        Matrix(m)
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::from_dmatrix(DMatrix::from_fn(rows, cols, f))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix dimensions must be positive");
        Matrix(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn scaled(&self, c: f64) -> Result<Matrix> {
        Matrix::from_dmatrix(&self.0 * c)
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.transpose().as_slice().to_vec()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    /// Euclidean norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        self.0.row_iter().map(|r| r.norm()).collect()
    }
}

/// Descending singular values with the source shape and rank tolerance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    rank_tol: f64,
}

/// Default relative rank tolerance: max(rows, cols) times single-precision epsilon.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    rows.max(cols) as f64 * 1.2e-7
}

fn check_rank_tol(rank_tol: f64) -> Result<()> {
    if rank_tol > 0.0 && rank_tol < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("rank_tol must lie in (0, 1), got {rank_tol}")))
    }
}

impl Spectrum {
    /// Builds a spectrum from arbitrary nonnegative values; they are sorted descending.
    pub fn from_values(mut values: Vec<f64>, rows: usize, cols: usize, rank_tol: f64) -> Result<Self> {
        check_rank_tol(rank_tol)?;
        if values.len() != rows.min(cols) {
            return Err(input(format!("spectrum of a {rows}x{cols} matrix needs {} values, got {}", rows.min(cols), values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(input("singular values must be finite and nonnegative"));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(Spectrum { values, rows, cols, rank_tol })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    /// Same values with a different rank tolerance.
    pub fn with_rank_tol(&self, rank_tol: f64) -> Result<Spectrum> {
        check_rank_tol(rank_tol)?;
        Ok(Spectrum { rank_tol, ..self.clone() })
    }

    /// Count of singular values above `rank_tol * sigma_1`.
    pub fn rank(&self) -> usize {
        let s1 = self.spectral_norm();
        if s1 == 0.0 {
            return 0;
        }
        let cut = self.rank_tol * s1;
        self.values.iter().filter(|&&s| s > cut).count()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.spectral_norm() == 0.0
    }

    /// Schatten power; see [`schatten_power`].
    pub fn schatten_power(&self, p: f64) -> Result<f64> {
        schatten_power(self, p)
    }

    /// rho_p = ||W||_{s,p}^p / ||W||_2^p, undefined (None) for the zero matrix.
    pub fn rho(&self, p: f64) -> Result<Option<f64>> {
        let s1 = self.spectral_norm();
        if s1 == 0.0 {
            return Ok(None);
        }
        Ok(Some(schatten_power(self, p)? / s1.powf(p)))
    }
}

/// Singular values of `m`, descending, with round-off negatives clamped to 0.
pub fn singular_values(m: &Matrix, rank_tol: f64) -> Result<Spectrum> {
    check_rank_tol(rank_tol)?;
    let mut values: Vec<f64> = m.0.clone().singular_values().iter().map(|&s| s.max(0.0)).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(Spectrum { values, rows: m.rows(), cols: m.cols(), rank_tol })
}

/// Singular values at the default rank tolerance.
pub fn spectrum(m: &Matrix) -> Spectrum {
    let tol = default_rank_tol(m.rows(), m.cols()).min(0.5);
    singular_values(m, tol).expect("default rank tolerance is in range")
}

/// ||W||_{s,p}^p for p in (0, 2]; numerical rank at p = 0.
pub fn schatten_power(s: &Spectrum, p: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&p) {
        return Err(domain(format!("Schatten index must lie in [0, 2], got {p}")));
    }
    if p == 0.0 {
        return Ok(s.rank() as f64);
    }
    Ok(neumaier_sum(s.values.iter().map(|&v| if v == 0.0 { 0.0 } else { v.powf(p) })))
}

pub fn spectral_norm(s: &Spectrum) -> f64 {
    s.spectral_norm()
}

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.0.norm()
}

/// ||W||_{a,b} = [sum_j (sum_i |W_ij|^a)^(b/a)]^(1/b): inner sum over rows within a column.
pub fn mixed_norm(m: &Matrix, a: f64, b: f64) -> Result<f64> {
    if !(a >= 1.0 && b >= 1.0) || !a.is_finite() || !b.is_finite() {
        return Err(domain(format!("mixed norm exponents must be finite and >= 1, got ({a}, {b})")));
    }
    let col_norm = |c: nalgebra::DVectorView<f64>| -> f64 {
        if a == 2.0 {
            c.norm()
        } else if a == 1.0 {
            c.iter().map(|x| x.abs()).sum()
        } else {
            c.iter().map(|x| x.abs().powf(a)).sum::<f64>().powf(1.0 / a)
        }
    };
    let cols = m.0.column_iter().map(|c| col_norm(c.as_view()));
    Ok(if b == 1.0 { neumaier_sum(cols) } else { neumaier_sum(cols.map(|x| x.powf(b))).powf(1.0 / b) })
}

/// Maximum Euclidean row norm.
pub fn two_to_inf_norm(m: &Matrix) -> f64 {
    m.0.row_iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Compensated (Neumaier) summation.
pub(crate) fn neumaier_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_row_major(rows, cols, v).unwrap()
    }

    #[test]
    fn diagonal_singular_values_sorted() {
        let m = mat(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let s = spectrum(&m);
        assert_eq!(s.values().len(), 3);
        for (a, b) in s.values().iter().zip([3.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_matrix_spectrum() {
        let s = spectrum(&Matrix::zeros(4, 6));
        assert_eq!(s.values(), &[0.0; 4]);
        assert_eq!(schatten_power(&s, 0.0).unwrap(), 0.0);
        assert_eq!(schatten_power(&s, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn gram_oracle_on_small_matrix() {
        let m = mat(5, 3, &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4, 0.9, 0.8, 1.1, -0.6, 0.2, 0.5, 1.4, -0.3, 0.0]);
        let s = spectrum(&m);
        let g = m.as_dmatrix().transpose() * m.as_dmatrix();
        let mut eig: Vec<f64> = g.symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in s.values().iter().zip(&eig) {
            assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(Matrix::from_row_major(1, 2, &[1.0, f64::NAN]).is_err());
        assert!(Matrix::from_row_major(1, 2, &[1.0, f64::INFINITY]).is_err());
        assert!(Matrix::from_row_major(2, 2, &[1.0]).is_err());
    }

    #[test]
    fn schatten_trivial_cases() {
        let s = spectrum(&Matrix::identity(4));
        for p in [0.0, 0.3, 1.0, 2.0] {
            assert!((schatten_power(&s, p).unwrap() - 4.0).abs() < 1e-12);
        }
        let s = Spectrum::from_values(vec![1.0, 2.0], 2, 2, 1e-6).unwrap();
        assert!((schatten_power(&s, 2.0).unwrap() - 5.0).abs() < 1e-15);
        assert!(schatten_power(&s, 2.5).is_err());
        assert!(schatten_power(&s, -0.1).is_err());
    }

    #[test]
    fn power_law_schatten_matches_direct_sum() {
        let vals: Vec<f64> = (1..=128).map(|i| (i as f64).powf(-0.7)).collect();
        let s = Spectrum::from_values(vals.clone(), 128, 128, default_rank_tol(128, 128)).unwrap();
        // Independent accumulator: pairwise summation in ascending order.
        let mut terms: Vec<f64> = vals.iter().map(|v| v.powf(0.5)).collect();
        terms.reverse();
        while terms.len() > 1 {
            terms = terms.chunks(2).map(|c| c.iter().sum()).collect();
        }
        let got = schatten_power(&s, 0.5).unwrap();
        assert!((got - terms[0]).abs() <= 1e-12 * terms[0]);
    }

    #[test]
    fn norm_examples() {
        let i8 = Matrix::identity(8);
        assert!((mixed_norm(&i8, 2.0, 1.0).unwrap() - 8.0).abs() < 1e-14);
        let m = mat(2, 2, &[1.0, -2.0, 3.0, -4.0]);
        assert_eq!(mixed_norm(&m, 1.0, 1.0).unwrap(), 10.0);
        assert!((mixed_norm(&m, 2.0, 2.0).unwrap() - frobenius_norm(&m)).abs() < 1e-14);
        assert_eq!(two_to_inf_norm(&Matrix::identity(3)), 1.0);
        assert_eq!(two_to_inf_norm(&mat(2, 2, &[3.0, 4.0, 0.0, 1.0])), 5.0);
        assert!(mixed_norm(&m, 0.5, 1.0).is_err());
    }

    #[test]
    fn column_convention_of_mixed_norm() {
        // Columns (1,0) and (1,1): sum of column l2 norms = 1 + sqrt(2).
        let m = mat(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((mixed_norm(&m, 2.0, 1.0).unwrap() - (1.0 + 2f64.sqrt())).abs() < 1e-14);
    }

    #[test]
    fn exact_rank_detected() {
        let u = mat(6, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.5, -0.5, 0.0, 2.0, 1.0, 0.0]);
        let v = mat(2, 5, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 1.0, 1.0, 3.0, -2.0]);
        let w = Matrix::from_dmatrix(u.as_dmatrix() * v.as_dmatrix()).unwrap();
        assert_eq!(spectrum(&w).rank(), 2);
        assert_eq!(schatten_power(&spectrum(&w), 0.0).unwrap(), 2.0);
    }

    fn arb_matrix() -> impl Strategy<Value = Matrix> {
        (1usize..9, 1usize..9).prop_flat_map(|(r, c)| {
            proptest::collection::vec(-3.0f64..3.0, r * c).prop_map(move |v| Matrix::from_row_major(r, c, &v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn rho_sandwich(m in arb_matrix(), p in 0.0f64..=2.0, dq in 0.0f64..=2.0) {
            let s = spectrum(&m);
            prop_assume!(!s.is_zero());
            let q = (p + dq).min(2.0);
            let rp = s.rho(p).unwrap().unwrap();
            let rq = s.rho(q).unwrap().unwrap();
            let mind = m.rows().min(m.cols()) as f64;
            prop_assert!(1.0 <= rq * (1.0 + 1e-9));
            prop_assert!(rq <= rp * (1.0 + 1e-9));
            prop_assert!(rp <= mind * (1.0 + 1e-9));
        }

        #[test]
        fn transpose_invariance(m in arb_matrix()) {
            let a = spectrum(&m);
            let b = spectrum(&m.transpose());
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((x - y).abs() <= 1e-10 * (1.0 + a.spectral_norm()));
            }
        }

        #[test]
        fn schatten_continuity(vals in proptest::collection::vec(0.0f64..10.0, 1..20), p in 0.01f64..1.99) {
            let n = vals.len();
            let s = Spectrum::from_values(vals, n, n, 1e-6).unwrap();
            let f0 = schatten_power(&s, p).unwrap();
            let f1 = schatten_power(&s, p + 1e-6).unwrap();
            prop_assert!((f0 - f1).abs() <= 1e-4 * (1.0 + f0));
        }

        #[test]
        fn norm_chain(m in arb_matrix()) {
            let s = spectrum(&m);
            let t = two_to_inf_norm(&m);
            let sp = s.spectral_norm();
            let f = frobenius_norm(&m);
            prop_assert!(t <= sp * (1.0 + 1e-12) + 1e-12);
            prop_assert!(sp <= f * (1.0 + 1e-12) + 1e-12);
        }
    }
}
