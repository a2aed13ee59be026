//! Parametrized source manifolds `f : D -> R^m` with exact Jacobians.
//!
//! Every specimen is a single global parametrization over a compact box whose
//! axes may be periodic. Built-in specimens carry hand-written derivatives;
//! user-defined coordinates (`expr`) are differentiated with dual numbers.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::dual::{forward_jacobian, Dual, Scalar};
use crate::error::{GdsError, Result};
use crate::expr::Expr;

/// Default grid resolution for curves.
pub const CURVE_GRID: usize = 4096;
/// Default per-axis grid resolution for surfaces.
pub const SURFACE_GRID: usize = 128;

/// Slack allowed when a parameter sits just outside a non-periodic axis.
const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub periodic: bool,
}

impl Axis {
    pub fn periodic(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, periodic: true }
    }

    pub fn bounded(lo: f64, hi: f64) -> Self {
        Axis { lo, hi, periodic: false }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// Shortest distance between two coordinates on this axis.
    pub fn separation(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).abs();
        if self.periodic {
            let period = self.length();
            let d = d % period;
            d.min(period - d)
        } else {
            d
        }
    }

    /// Signed shortest difference `a - b` (periodic axes use the nearest
    /// representative).
    pub fn signed_difference(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        if self.periodic {
            let period = self.length();
            d - period * (d / period).round()
        } else {
            d
        }
    }

    /// Largest possible separation on this axis.
    pub fn diameter(&self) -> f64 {
        if self.periodic {
            self.length() / 2.0
        } else {
            self.length()
        }
    }

    /// Grid coordinates: `res` samples of the period, or `res` samples of the
    /// closed interval including both ends.
    pub fn grid(&self, res: usize) -> Vec<f64> {
        let res = res.max(2);
        let len = self.length();
        if self.periodic {
            (0..res)
                .map(|k| self.lo + len * (k as f64) / (res as f64))
                .collect()
        } else {
            (0..res)
                .map(|k| self.lo + len * (k as f64) / ((res - 1) as f64))
                .collect()
        }
    }

    /// Spacing of [`Axis::grid`] at resolution `res`.
    pub fn spacing(&self, res: usize) -> f64 {
        let res = res.max(2);
        if self.periodic {
            self.length() / res as f64
        } else {
            self.length() / (res - 1) as f64
        }
    }
}

/// Parameter domain: a product of intervals, some of them periodic.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDomain {
    axes: Vec<Axis>,
}

impl ParamDomain {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(GdsError::InvalidManifold("domain needs at least one axis".into()));
        }
        for (k, ax) in axes.iter().enumerate() {
            if !(ax.lo.is_finite() && ax.hi.is_finite() && ax.lo < ax.hi) {
                return Err(GdsError::InvalidManifold(format!(
                    "axis {} needs lo < hi, got [{}, {}]",
                    k + 1,
                    ax.lo,
                    ax.hi
                )));
            }
        }
        Ok(ParamDomain { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Brings `q` to its canonical representative: periodic coordinates are
    /// reduced into `[lo, hi)`, bounded ones must already lie in range.
    pub fn wrap(&self, q: &[f64]) -> Result<Vec<f64>> {
        if q.len() != self.dim() {
            return Err(GdsError::Dimension {
                expected: self.dim(),
                found: q.len(),
            });
        }
        q.iter()
            .zip(&self.axes)
            .enumerate()
            .map(|(k, (&v, ax))| {
                if !v.is_finite() {
                    return Err(GdsError::OutOfDomain {
                        axis: k + 1,
                        value: v,
                        lo: ax.lo,
                        hi: ax.hi,
                    });
                }
                if ax.periodic {
                    Ok(ax.lo + (v - ax.lo).rem_euclid(ax.length()))
                } else if v < ax.lo - DOMAIN_SLACK || v > ax.hi + DOMAIN_SLACK {
                    Err(GdsError::OutOfDomain {
                        axis: k + 1,
                        value: v,
                        lo: ax.lo,
                        hi: ax.hi,
                    })
                } else {
                    Ok(v.clamp(ax.lo, ax.hi))
                }
            })
            .collect()
    }

    /// Like [`ParamDomain::wrap`] but clamps bounded axes instead of failing.
    pub fn project(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .zip(&self.axes)
            .map(|(&v, ax)| {
                if ax.periodic {
                    ax.lo + (v - ax.lo).rem_euclid(ax.length())
                } else {
                    v.clamp(ax.lo, ax.hi)
                }
            })
            .collect()
    }

    /// Euclidean distance with per-axis periodic wrap-around.
    pub fn separation(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.axes)
            .map(|((&x, &y), ax)| ax.separation(x, y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Per-axis signed shortest differences `a - b`.
    pub fn difference(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.axes)
            .map(|((&x, &y), ax)| ax.signed_difference(x, y))
            .collect()
    }

    /// Largest separation between two points of the domain.
    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|ax| ax.diameter().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Tensor-product grid, first axis varying slowest.
    pub fn grid(&self, res: &[usize]) -> Vec<Vec<f64>> {
        let coords: Vec<Vec<f64>> = self
            .axes
            .iter()
            .zip(res)
            .map(|(ax, &r)| ax.grid(r))
            .collect();
        let mut points: Vec<Vec<f64>> = vec![Vec::new()];
        for axis_coords in &coords {
            let mut next = Vec::with_capacity(points.len() * axis_coords.len());
            for p in &points {
                for &c in axis_coords {
                    let mut q = p.clone();
                    q.push(c);
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}

/// User-defined coordinates `f_j(t1..tn)` as parsed expressions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprCoordinates {
    pub sources: Vec<String>,
    exprs: Arc<Vec<Expr>>,
}

impl ExprCoordinates {
    pub fn parse(sources: Vec<String>) -> Result<Self> {
        let exprs = sources
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExprCoordinates {
            sources,
            exprs: Arc::new(exprs),
        })
    }

    pub fn arity(&self) -> usize {
        self.exprs.iter().map(Expr::arity).max().unwrap_or(0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Specimen {
    Circle { radius: f64, center: Vec<f64> },
    Trefoil,
    FigureEight,
    Cusp,
    Torus { big: f64, small: f64 },
    Expr(ExprCoordinates),
}

/// A parametrized manifold with claimed properties.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamManifold {
    name: String,
    domain: ParamDomain,
    ambient: usize,
    specimen: Specimen,
    claims_immersion: bool,
    claims_injective: bool,
}

/// `t -> center + radius (cos t, sin t, 0, ..., 0)` on periodic `[0, 2 pi)`.
pub fn circle(radius: f64, center: &[f64], m: usize) -> Result<ParamManifold> {
    if m < 2 {
        return Err(GdsError::InvalidManifold(format!(
            "circle needs ambient dimension m >= 2, got {m}"
        )));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(GdsError::InvalidManifold(format!(
            "circle radius must be positive, got {radius}"
        )));
    }
    if center.len() != m {
        return Err(GdsError::Dimension {
            expected: m,
            found: center.len(),
        });
    }
    Ok(ParamManifold {
        name: "circle".into(),
        domain: ParamDomain::new(vec![Axis::periodic(0.0, TAU)])?,
        ambient: m,
        specimen: Specimen::Circle {
            radius,
            center: center.to_vec(),
        },
        claims_immersion: true,
        claims_injective: true,
    })
}

/// Trefoil knot `(sin t + 2 sin 2t, cos t - 2 cos 2t, -sin 3t)` in `R^3`.
pub fn trefoil() -> ParamManifold {
    ParamManifold {
        name: "trefoil".into(),
        domain: ParamDomain {
            axes: vec![Axis::periodic(0.0, TAU)],
        },
        ambient: 3,
        specimen: Specimen::Trefoil,
        claims_immersion: true,
        claims_injective: true,
    }
}

/// Lemniscate `(sin t, sin t cos t)`; immersed with a double point at `t = 0, pi`.
pub fn figure_eight() -> ParamManifold {
    ParamManifold {
        name: "figure-eight".into(),
        domain: ParamDomain {
            axes: vec![Axis::periodic(0.0, TAU)],
        },
        ambient: 2,
        specimen: Specimen::FigureEight,
        claims_immersion: true,
        claims_injective: false,
    }
}

/// Semicubical parabola `(t^2, t^3)` on `[-1, 1]`; injective, rank drop at 0.
pub fn cusp_curve() -> ParamManifold {
    ParamManifold {
        name: "cusp".into(),
        domain: ParamDomain {
            axes: vec![Axis::bounded(-1.0, 1.0)],
        },
        ambient: 2,
        specimen: Specimen::Cusp,
        claims_immersion: false,
        claims_injective: true,
    }
}

/// Flat torus `(R cos u, R sin u, r cos v, r sin v, 0, ...)` in `R^m`.
pub fn torus_surface(m: usize, big: f64, small: f64) -> Result<ParamManifold> {
    if m < 4 {
        return Err(GdsError::InvalidManifold(format!(
            "flat torus needs ambient dimension m >= 4, got {m}"
        )));
    }
    if !(big > small && small > 0.0 && big.is_finite()) {
        return Err(GdsError::InvalidManifold(format!(
            "torus radii need R > r > 0, got R = {big}, r = {small}"
        )));
    }
    Ok(ParamManifold {
        name: "torus".into(),
        domain: ParamDomain::new(vec![Axis::periodic(0.0, TAU), Axis::periodic(0.0, TAU)])?,
        ambient: m,
        specimen: Specimen::Torus { big, small },
        claims_immersion: true,
        claims_injective: true,
    })
}

/// Manifold from coordinate expressions in `t1..tn` over the given domain.
pub fn expression_manifold(
    coordinates: Vec<String>,
    domain: ParamDomain,
    claims_immersion: bool,
    claims_injective: bool,
) -> Result<ParamManifold> {
    if coordinates.is_empty() {
        return Err(GdsError::InvalidManifold("expr needs at least one coordinate".into()));
    }
    let parsed = ExprCoordinates::parse(coordinates)?;
    if parsed.arity() > domain.dim() {
        return Err(GdsError::InvalidManifold(format!(
            "expressions use t{} but the domain has {} axes",
            parsed.arity(),
            domain.dim()
        )));
    }
    Ok(ParamManifold {
        name: "expr".into(),
        ambient: parsed.sources.len(),
        domain,
        specimen: Specimen::Expr(parsed),
        claims_immersion,
        claims_injective,
    })
}

impl ParamManifold {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> &ParamDomain {
        &self.domain
    }

    pub fn source_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn specimen(&self) -> &Specimen {
        &self.specimen
    }

    pub fn claims_immersion(&self) -> bool {
        self.claims_immersion
    }

    pub fn claims_injective(&self) -> bool {
        self.claims_injective
    }

    /// Default grid resolution per axis (curves 4096, surfaces 128).
    pub fn default_grid(&self) -> Vec<usize> {
        let res = if self.source_dim() == 1 {
            CURVE_GRID
        } else {
            SURFACE_GRID
        };
        vec![res; self.source_dim()]
    }

    /// Evaluation without domain checks, generic over the scalar type.
    pub fn eval_generic<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let c = S::from_f64;
        match &self.specimen {
            Specimen::Circle { radius, center } => {
                let t = q[0];
                let mut out: Vec<S> = center.iter().map(|&v| c(v)).collect();
                out[0] = out[0] + c(*radius) * t.cos();
                out[1] = out[1] + c(*radius) * t.sin();
                out
            }
            Specimen::Trefoil => {
                let t = q[0];
                let two = c(2.0);
                vec![
                    t.sin() + two * (two * t).sin(),
                    t.cos() - two * (two * t).cos(),
                    -(c(3.0) * t).sin(),
                ]
            }
            Specimen::FigureEight => {
                let t = q[0];
                vec![t.sin(), t.sin() * t.cos()]
            }
            Specimen::Cusp => {
                let t = q[0];
                vec![t * t, t * t * t]
            }
            Specimen::Torus { big, small } => {
                let (u, v) = (q[0], q[1]);
                let mut out = vec![c(0.0); self.ambient];
                out[0] = c(*big) * u.cos();
                out[1] = c(*big) * u.sin();
                out[2] = c(*small) * v.cos();
                out[3] = c(*small) * v.sin();
                out
            }
            Specimen::Expr(coords) => coords.exprs.iter().map(|e| e.eval(q)).collect(),
        }
    }

    /// Hand-written `m x n` Jacobian without domain checks.
    pub(crate) fn jacobian_unchecked(&self, q: &[f64]) -> DMatrix<f64> {
        let (m, n) = (self.ambient, self.source_dim());
        let mut jac = DMatrix::zeros(m, n);
        match &self.specimen {
            Specimen::Circle { radius, .. } => {
                let t = q[0];
                jac[(0, 0)] = -radius * t.sin();
                jac[(1, 0)] = radius * t.cos();
            }
            Specimen::Trefoil => {
                let t = q[0];
                jac[(0, 0)] = t.cos() + 4.0 * (2.0 * t).cos();
                jac[(1, 0)] = -t.sin() + 4.0 * (2.0 * t).sin();
                jac[(2, 0)] = -3.0 * (3.0 * t).cos();
            }
            Specimen::FigureEight => {
                let t = q[0];
                jac[(0, 0)] = t.cos();
                jac[(1, 0)] = (2.0 * t).cos();
            }
            Specimen::Cusp => {
                let t = q[0];
                jac[(0, 0)] = 2.0 * t;
                jac[(1, 0)] = 3.0 * t * t;
            }
            Specimen::Torus { big, small } => {
                let (u, v) = (q[0], q[1]);
                jac[(0, 0)] = -big * u.sin();
                jac[(1, 0)] = big * u.cos();
                jac[(2, 1)] = -small * v.sin();
                jac[(3, 1)] = small * v.cos();
            }
            Specimen::Expr(_) => return self.jacobian_ad_unchecked(q),
        }
        jac
    }

    fn jacobian_ad_unchecked(&self, q: &[f64]) -> DMatrix<f64> {
        let rows = forward_jacobian(|v: &[Dual]| self.eval_generic(v), q);
        DMatrix::from_fn(self.ambient, self.source_dim(), |i, k| rows[i][k])
    }

    pub fn eval(&self, q: &[f64]) -> Result<Vec<f64>> {
        let q = self.domain.wrap(q)?;
        Ok(self.eval_generic(&q))
    }

    pub fn jacobian(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let q = self.domain.wrap(q)?;
        Ok(self.jacobian_unchecked(&q))
    }

    /// Jacobian by dual-number differentiation of the evaluator.
    pub fn jacobian_ad(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        let q = self.domain.wrap(q)?;
        Ok(self.jacobian_ad_unchecked(&q))
    }

    /// Periodic-aware distance between two parameters.
    pub fn domain_separation(&self, q: &[f64], q2: &[f64]) -> Result<f64> {
        let a = self.domain.wrap(q)?;
        let b = self.domain.wrap(q2)?;
        Ok(self.domain.separation(&a, &b))
    }
}

/// Parameters of the known double point of [`figure_eight`].
pub const FIGURE_EIGHT_DOUBLE_POINT: (f64, f64) = (0.0, PI);

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn circle_values() {
        let c = circle(1.0, &[0.0, 0.0], 2).unwrap();
        assert!(close(&c.eval(&[0.0]).unwrap(), &[1.0, 0.0], 0.0));
        let j = c.jacobian(&[0.0]).unwrap();
        assert_eq!((j.nrows(), j.ncols()), (2, 1));
        assert!(close(j.as_slice(), &[0.0, 1.0], 0.0));
        let c3 = circle(2.0, &[1.0, 1.0, 1.0], 3).unwrap();
        assert!(close(&c3.eval(&[PI]).unwrap(), &[-1.0, 1.0, 1.0], 1e-15));
        assert!(circle(1.0, &[0.0], 1).is_err());
        assert!(circle(0.0, &[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn trefoil_and_figure_eight_values() {
        assert!(close(&trefoil().eval(&[0.0]).unwrap(), &[0.0, -1.0, 0.0], 1e-15));
        let f = figure_eight();
        let (a, b) = FIGURE_EIGHT_DOUBLE_POINT;
        assert!(close(&f.eval(&[a]).unwrap(), &f.eval(&[b]).unwrap(), 1e-15));
        assert!(close(&f.eval(&[a]).unwrap(), &[0.0, 0.0], 1e-15));
        assert!(f.claims_immersion() && !f.claims_injective());
    }

    #[test]
    fn cusp_rank_drop_and_range() {
        let c = cusp_curve();
        assert!(close(c.jacobian(&[0.0]).unwrap().as_slice(), &[0.0, 0.0], 0.0));
        assert!(matches!(
            c.eval(&[1.5]),
            Err(GdsError::OutOfDomain { axis: 1, .. })
        ));
    }

    #[test]
    fn torus_values() {
        let t = torus_surface(5, 2.0, 1.0).unwrap();
        assert!(close(&t.eval(&[0.0, 0.0]).unwrap(), &[2.0, 0.0, 1.0, 0.0, 0.0], 0.0));
        assert!(torus_surface(3, 2.0, 1.0).is_err());
        assert!(torus_surface(4, 1.0, 2.0).is_err());
        let j = t.jacobian(&[0.3, 1.1]).unwrap();
        let (c0, c1) = (j.column(0), j.column(1));
        assert!(c0.dot(&c1).abs() < 1e-15);
        assert!((c0.norm() - 2.0).abs() < 1e-15 && (c1.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn separation_examples() {
        let f = trefoil();
        assert!((f.domain_separation(&[0.1], &[TAU - 0.1]).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(f.domain_separation(&[1.0], &[1.0]).unwrap(), 0.0);
        let c = cusp_curve();
        assert!((c.domain_separation(&[0.2], &[0.9]).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn periodic_wrap() {
        let f = trefoil();
        let a = f.eval(&[0.5 + TAU]).unwrap();
        let b = f.eval(&[0.5]).unwrap();
        assert!(close(&a, &b, 1e-12));
        assert!(f.eval(&[f64::NAN]).is_err());
    }

    #[test]
    fn grids_are_nested_under_refinement() {
        let ax = Axis::bounded(-1.0, 1.0);
        let coarse = ax.grid(9);
        let fine = ax.grid(17);
        for (k, v) in coarse.iter().enumerate() {
            assert_eq!(*v, fine[2 * k]);
        }
        let ax = Axis::periodic(0.0, TAU);
        let coarse = ax.grid(64);
        let fine = ax.grid(128);
        for (k, v) in coarse.iter().enumerate() {
            assert_eq!(*v, fine[2 * k]);
        }
    }

    #[test]
    fn expression_manifold_matches_builtin_circle() {
        let dom = ParamDomain::new(vec![Axis::periodic(0.0, TAU)]).unwrap();
        let e = expression_manifold(vec!["cos(t1)".into(), "sin(t1)".into()], dom, true, true)
            .unwrap();
        let c = circle(1.0, &[0.0, 0.0], 2).unwrap();
        for &t in &[0.0, 0.7, 2.5, 5.9] {
            assert!(close(&e.eval(&[t]).unwrap(), &c.eval(&[t]).unwrap(), 1e-15));
            assert!(close(
                e.jacobian(&[t]).unwrap().as_slice(),
                c.jacobian(&[t]).unwrap().as_slice(),
                1e-15
            ));
        }
        let dom = ParamDomain::new(vec![Axis::bounded(0.0, 1.0)]).unwrap();
        assert!(expression_manifold(vec!["t2".into()], dom, true, true).is_err());
    }

    #[test]
    fn domain_validation() {
        assert!(ParamDomain::new(vec![Axis::bounded(1.0, 1.0)]).is_err());
        assert!(ParamDomain::new(vec![]).is_err());
    }
}
