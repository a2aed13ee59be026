//! Small dense linear-algebra helpers on top of nalgebra's SVD.

use nalgebra::{DMatrix, DVector};

/// Default relative threshold for numerical rank: singular values at or below
/// `tol * sigma_max` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Singular values in descending order.
pub fn singular_values(mat: &DMatrix<f64>) -> Vec<f64> {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = mat.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Smallest of the `min(rows, cols)` singular values. For a tall `m x n`
/// Jacobian this is sigma_n, the distance to the nearest rank-deficient matrix.
pub fn smallest_singular_value(mat: &DMatrix<f64>) -> f64 {
    if mat.ncols() == 1 {
        return mat.column(0).norm();
    }
    singular_values(mat).last().copied().unwrap_or(0.0)
}

/// Number of singular values exceeding `tol * sigma_max`.
pub fn numerical_rank(mat: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(mat);
    let Some(&max) = sv.first() else {
        return 0;
    };
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Unit right singular vector belonging to the smallest singular value of a
/// square matrix, together with that singular value.
pub fn null_vector(mat: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = mat.ncols();
    let svd = mat.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    let v = DVector::from_iterator(n, v_t.row(idx).iter().copied());
    (v, sigma)
}

/// Solves the square system `mat * x = rhs`; falls back to the SVD
/// pseudo-inverse when LU reports a singular matrix.
pub fn solve(mat: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(x) = mat.clone().lu().solve(rhs) {
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    mat.clone().svd(true, true).solve(rhs, 1e-14).ok()
}

/// Converts row vectors into a matrix.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

pub fn to_rows(mat: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..mat.nrows()).map(|i| mat.row(i).iter().copied().collect()).collect()
}

pub fn max_abs(mat: &DMatrix<f64>) -> f64 {
    mat.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
