//! Generalized distance-squared mappings
//!
//! `G(x)_i = sum_j a_ij (x_j - p_ij)^2` for an `l x m` coefficient matrix `A`
//! with nonzero entries and `l` central points `p_i` in `R^m`.

use nalgebra::DMatrix;

use crate::dual::{forward_jacobian, Dual, Scalar};
use crate::error::{GdsError, Result};

/// Ratio below which `min |a_ij| / max |a_ij|` triggers a conditioning warning.
pub const CONDITIONING_RATIO: f64 = 1e-8;

/// `l x m` coefficient matrix with every entry nonzero.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(GdsError::EmptyMatrix);
        }
        let mut entries = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != ncols {
                return Err(GdsError::RaggedRow {
                    row: i + 1,
                    found: row.len(),
                    expected: ncols,
                });
            }
            for (j, &a) in row.iter().enumerate() {
                if !a.is_finite() {
                    return Err(GdsError::NonFiniteEntry { row: i + 1, col: j + 1 });
                }
                if a == 0.0 {
                    return Err(GdsError::ZeroEntry { row: i + 1, col: j + 1 });
                }
                entries.push(a);
            }
        }
        Ok(CoefficientMatrix {
            rows: nrows,
            cols: ncols,
            entries,
        })
    }

    /// All-ones matrix (the distance-squared mapping's coefficients).
    pub fn ones(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        CoefficientMatrix {
            rows,
            cols,
            entries: vec![1.0; rows * cols],
        }
    }

    /// Every row `(-1, 1, ..., 1)`.
    pub fn lorentzian(rows: usize, cols: usize) -> Self {
        let mut a = Self::ones(rows, cols);
        for i in 0..rows {
            a.entries[i * cols] = -1.0;
        }
        a
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Zero-based entry access.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    pub fn min_abs(&self) -> f64 {
        self.entries.iter().fold(f64::INFINITY, |m, a| m.min(a.abs()))
    }

    /// Warning text when the entries span more than eight decades.
    pub fn conditioning_warning(&self) -> Option<String> {
        let (lo, hi) = (self.min_abs(), self.max_abs());
        (lo < CONDITIONING_RATIO * hi).then(|| {
            format!(
                "ill-conditioned coefficients: min |a_ij| = {lo:e} < {CONDITIONING_RATIO:e} * max |a_ij| = {hi:e}"
            )
        })
    }
}

/// The tuple `p = (p_1, ..., p_l)` of central points in `R^m`.
#[derive(Clone, Debug, PartialEq)]
pub struct CentralPoints {
    points: Vec<Vec<f64>>,
}

impl CentralPoints {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.is_empty() || dim == 0 {
            return Err(GdsError::EmptyMatrix);
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(GdsError::PointDimension {
                    index: i + 1,
                    found: p.len(),
                    expected: dim,
                });
            }
            if let Some(j) = p.iter().position(|v| !v.is_finite()) {
                return Err(GdsError::InvalidArgument(format!(
                    "central point {} coordinate {} is not finite",
                    i + 1,
                    j + 1
                )));
            }
        }
        Ok(CentralPoints { points })
    }

    /// `count` copies of the same point.
    pub fn repeated(point: &[f64], count: usize) -> Result<Self> {
        Self::new(vec![point.to_vec(); count])
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.points.clone()
    }
}

/// A validated generalized distance-squared mapping `G_(p,A): R^m -> R^l`.
#[derive(Clone, Debug, PartialEq)]
pub struct GdsMap {
    a: CoefficientMatrix,
    p: CentralPoints,
}

impl GdsMap {
    pub fn new(a: CoefficientMatrix, p: CentralPoints) -> Result<Self> {
        if p.count() != a.rows() {
            return Err(GdsError::PointCount {
                found: p.count(),
                expected: a.rows(),
            });
        }
        for (i, pt) in p.points().iter().enumerate() {
            if pt.len() != a.cols() {
                return Err(GdsError::PointDimension {
                    index: i + 1,
                    found: pt.len(),
                    expected: a.cols(),
                });
            }
        }
        if let Some(w) = a.conditioning_warning() {
            log::warn!("{w}");
        }
        Ok(GdsMap { a, p })
    }

    pub fn from_rows(a: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(CoefficientMatrix::new(a)?, CentralPoints::new(p)?)
    }

    /// Number of components `l`.
    pub fn rows(&self) -> usize {
        self.a.rows()
    }

    /// Source dimension `m`.
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn coefficients(&self) -> &CoefficientMatrix {
        &self.a
    }

    pub fn central_points(&self) -> &CentralPoints {
        &self.p
    }

    pub fn is_equidimensional(&self) -> bool {
        self.rows() == self.dim()
    }

    pub fn require_equidimensional(&self) -> Result<()> {
        if self.is_equidimensional() {
            Ok(())
        } else {
            Err(GdsError::NotEquidimensional {
                rows: self.rows(),
                cols: self.dim(),
            })
        }
    }

    fn check_point(&self, len: usize) -> Result<()> {
        if len == self.dim() {
            Ok(())
        } else {
            Err(GdsError::Dimension {
                expected: self.dim(),
                found: len,
            })
        }
    }

    /// Evaluation over any scalar type; `x` must have length `m`.
    pub fn eval_generic<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.dim());
        (0..self.rows())
            .map(|i| {
                let center = self.p.point(i);
                let mut acc = S::from_f64(0.0);
                for (j, &xj) in x.iter().enumerate() {
                    let d = xj - S::from_f64(center[j]);
                    acc = acc + S::from_f64(self.a.get(i, j)) * d * d;
                }
                acc
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_point(x.len())?;
        Ok(self.eval_generic(x))
    }

    /// Entry `(i, j)` is `2 a_ij (x_j - p_ij)`; row `i` depends only on `p_i`.
    pub fn jacobian_closed_form(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x.len())?;
        Ok(self.jacobian_unchecked(x))
    }

    pub(crate) fn jacobian_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows(), self.dim(), |i, j| {
            2.0 * self.a.get(i, j) * (x[j] - self.p.point(i)[j])
        })
    }

    /// Jacobian by forward-mode differentiation of [`GdsMap::eval_generic`].
    pub fn jacobian_ad(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x.len())?;
        let rows = forward_jacobian(|v: &[Dual]| self.eval_generic(v), x);
        Ok(DMatrix::from_fn(self.rows(), self.dim(), |i, j| rows[i][j]))
    }

    /// Determinant of the closed-form Jacobian (equidimensional maps only).
    pub fn det_jacobian(&self, x: &[f64]) -> Result<f64> {
        self.require_equidimensional()?;
        Ok(self.jacobian_closed_form(x)?.determinant())
    }

    pub fn conditioning_warning(&self) -> Option<String> {
        self.a.conditioning_warning()
    }
}

/// The distance-squared mapping `D_p` (every coefficient 1).
pub fn distance_squared_map(p: CentralPoints) -> GdsMap {
    let a = CoefficientMatrix::ones(p.count(), p.dim());
    GdsMap::new(a, p).expect("dimensions agree by construction")
}

/// The Lorentzian distance-squared mapping `L_p` (first coefficient of every
/// row -1, the rest 1).
pub fn lorentzian_map(p: CentralPoints) -> GdsMap {
    let a = CoefficientMatrix::lorentzian(p.count(), p.dim());
    GdsMap::new(a, p).expect("dimensions agree by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_map() -> GdsMap {
        GdsMap::from_rows(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn minimal_map() {
        let g = GdsMap::from_rows(vec![vec![1.0]], vec![vec![0.0]]).unwrap();
        assert_eq!((g.rows(), g.dim()), (1, 1));
        assert_eq!(g.eval(&[3.0]).unwrap(), vec![9.0]);
        assert_eq!(g.jacobian_closed_form(&[3.0]).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn zero_entry_is_named() {
        let err = GdsMap::from_rows(
            vec![vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap_err();
        assert_eq!(err, GdsError::ZeroEntry { row: 1, col: 2 });
    }

    #[test]
    fn dimension_errors_name_the_offender() {
        let err = GdsMap::from_rows(
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![0.0, 0.0], vec![1.0]],
        )
        .unwrap_err();
        assert_eq!(
            err,
            GdsError::PointDimension {
                index: 2,
                found: 1,
                expected: 2
            }
        );
        let err = GdsMap::from_rows(vec![vec![1.0, 2.0]], vec![vec![0.0, 0.0], vec![1.0, 1.0]])
            .unwrap_err();
        assert_eq!(err, GdsError::PointCount { found: 2, expected: 1 });
        let err = CoefficientMatrix::new(vec![vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, GdsError::RaggedRow { row: 2, .. }));
        let g = sample_map();
        assert!(matches!(g.eval(&[1.0]), Err(GdsError::Dimension { expected: 2, found: 1 })));
    }

    #[test]
    fn eval_and_jacobian_of_sample_map() {
        let g = sample_map();
        assert_eq!(g.eval(&[1.0, 2.0]).unwrap(), vec![9.0, 4.0]);
        let j = g.jacobian_closed_form(&[1.0, 2.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, 8.0, 0.0, 8.0]));
        let jad = g.jacobian_ad(&[1.0, 2.0]).unwrap();
        assert!((j - jad).amax() < 1e-9);
    }

    #[test]
    fn central_point_zeroes_its_component_and_row() {
        let g = sample_map();
        for i in 0..2 {
            let pi = g.central_points().point(i).to_vec();
            assert_eq!(g.eval(&pi).unwrap()[i], 0.0);
            let j = g.jacobian_closed_form(&pi).unwrap();
            assert!(j.row(i).iter().all(|&v| v == 0.0));
            assert_eq!(g.det_jacobian(&pi).unwrap(), 0.0);
        }
    }

    #[test]
    fn special_maps() {
        let d = distance_squared_map(CentralPoints::new(vec![vec![0.0, 0.0]]).unwrap());
        assert_eq!(d.eval(&[3.0, 4.0]).unwrap(), vec![25.0]);
        let l = lorentzian_map(CentralPoints::new(vec![vec![0.0, 0.0]]).unwrap());
        assert_eq!(l.eval(&[1.0, 1.0]).unwrap(), vec![0.0]);
        assert_eq!(l.eval(&[2.0, 1.0]).unwrap(), vec![-3.0]);
        assert_eq!(l.coefficients().row(0), &[-1.0, 1.0]);
        let l1 = lorentzian_map(CentralPoints::new(vec![vec![2.0]]).unwrap());
        assert_eq!(l1.coefficients().row(0), &[-1.0]);
    }

    #[test]
    fn distance_squared_with_common_center_is_point_symmetric() {
        let c = [0.3, -1.2, 2.0];
        let d = distance_squared_map(CentralPoints::repeated(&c, 3).unwrap());
        for k in 0..20 {
            let x: Vec<f64> = (0..3).map(|j| ((k * 7 + j * 3) as f64 * 0.37).sin() * 4.0).collect();
            let mirrored: Vec<f64> = x.iter().zip(&c).map(|(xi, ci)| 2.0 * ci - xi).collect();
            let (a, b) = (d.eval(&x).unwrap(), d.eval(&mirrored).unwrap());
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
            }
        }
    }

    #[test]
    fn conditioning_warning_threshold() {
        let a = CoefficientMatrix::new(vec![vec![1.0, 1e-9]]).unwrap();
        assert!(a.conditioning_warning().is_some());
        let a = CoefficientMatrix::new(vec![vec![1.0, 1e-7]]).unwrap();
        assert!(a.conditioning_warning().is_none());
    }

    #[test]
    fn theorem_level_operations_reject_rectangular_maps() {
        let g = GdsMap::from_rows(vec![vec![1.0, 1.0]], vec![vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            g.det_jacobian(&[1.0, 1.0]),
            Err(GdsError::NotEquidimensional { rows: 1, cols: 2 })
        );
    }
}
