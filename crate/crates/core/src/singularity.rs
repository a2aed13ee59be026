//! Singularities and non-injectivity of the equidimensional map itself.
//!
//! For `m = 2` the determinant of the Jacobian is a conic without squared
//! terms; its zero set is traced by predictor-corrector continuation and each
//! traced point is classified as fold or cusp with the Whitney criteria,
//! using the exact gradient and Hessian of that conic.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{GdsError, Result};
use crate::linalg::{self, null_vector, numerical_rank, singular_values};
use crate::maps::GdsMap;
use crate::tolerances::Tolerances;

/// Determinant of the Jacobian of an equidimensional map.
pub fn det_jacobian(g: &GdsMap, x: &[f64]) -> Result<f64> {
    g.det_jacobian(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterCheck {
    /// 1-based index of the central point.
    pub index: usize,
    /// Largest absolute entry of row `index` of the Jacobian at `p_index`.
    pub row_max_abs: f64,
    pub row_is_zero: bool,
    pub rank: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `tol * sigma_max - sigma_min`; nonnegative when the rank test passes.
    pub rank_margin: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularLemmaReport {
    pub m: usize,
    pub matrix_rank_tolerance: f64,
    pub centers: Vec<CenterCheck>,
    pub all_pass: bool,
}

/// At every central point `p_i` the `i`-th Jacobian row vanishes exactly, so
/// the numerical rank is at most `m - 1`.
pub fn verify_lemma_singular(g: &GdsMap, rank_tol: f64) -> Result<SingularLemmaReport> {
    g.require_equidimensional()?;
    let m = g.dim();
    let centers: Vec<CenterCheck> = (0..m)
        .map(|i| {
            let pi = g.central_points().point(i);
            let jac = g.jacobian_unchecked(pi);
            let row_max_abs = jac.row(i).amax();
            let sv = singular_values(&jac);
            let sigma_max = sv.first().copied().unwrap_or(0.0);
            let sigma_min = sv.last().copied().unwrap_or(0.0);
            let rank = numerical_rank(&jac, rank_tol);
            let row_is_zero = row_max_abs == 0.0;
            CenterCheck {
                index: i + 1,
                row_max_abs,
                row_is_zero,
                rank,
                sigma_min,
                sigma_max,
                rank_margin: rank_tol * sigma_max - sigma_min,
                pass: row_is_zero && rank < m,
            }
        })
        .collect();
    let all_pass = centers.iter().all(|c| c.pass);
    Ok(SingularLemmaReport {
        m,
        matrix_rank_tolerance: rank_tol,
        centers,
        all_pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionOptions {
    pub attempts: usize,
    pub seed: u64,
    /// Required bound on `|G(x) - G(x')|`.
    pub gap_tolerance: f64,
    /// Required lower bound on `|x - x'|`.
    pub min_separation: f64,
}

impl Default for CollisionOptions {
    fn default() -> Self {
        CollisionOptions {
            attempts: 64,
            seed: 0,
            gap_tolerance: 1e-9,
            min_separation: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollisionStrategy {
    /// `x = p_i + s eta`, `x' = p_i - s eta` with `eta` spanning the kernel of
    /// `JG(p_i)`; the quadratic map satisfies
    /// `G(c + h) - G(c - h) = 2 JG(c) h`, so the pair collides exactly.
    KernelReflection,
    /// Random `x`, Newton on `G(x') = G(x)` from `x'_0 = 2 p_i - x`.
    Reflection,
    /// Random `x` and random `x'_0`.
    RandomStart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionPair {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub gap: f64,
    pub separation: f64,
    pub strategy: CollisionStrategy,
    pub attempts_used: usize,
    pub newton_iterations: usize,
}

/// Damped Newton on `G(x') = target`. Returns the final point, residual norm
/// and iteration count.
fn newton_solve(g: &GdsMap, target: &[f64], start: &[f64], max_iter: usize) -> (Vec<f64>, f64, usize) {
    let residual = |x: &[f64]| -> Vec<f64> {
        g.eval_generic(x)
            .iter()
            .zip(target)
            .map(|(a, b)| a - b)
            .collect()
    };
    let mut x = start.to_vec();
    let mut r = residual(&x);
    let mut rn = linalg::norm(&r);
    let mut iters = 0;
    for _ in 0..max_iter {
        if rn == 0.0 {
            break;
        }
        iters += 1;
        let jac = g.jacobian_unchecked(&x);
        let Some(dx) = linalg::solve(&jac, &(-DVector::from_column_slice(&r))) else {
            break;
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
            let rc = residual(&cand);
            let rcn = linalg::norm(&rc);
            if rcn < rn {
                x = cand;
                r = rc;
                rn = rcn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, rn, iters)
}

/// Constructs `x != x'` with `G(x) = G(x')`.
///
/// Attempts cycle through the central points: first the kernel-reflection
/// pairs around each `p_i`, then reflected Newton starts from random `x`,
/// then fully random starts. Failure after `attempts` tries is an error.
pub fn find_collision(g: &GdsMap, opts: &CollisionOptions) -> Result<CollisionPair> {
    g.require_equidimensional()?;
    let m = g.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let spread = g
        .central_points()
        .points()
        .iter()
        .flatten()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut best_gap = f64::INFINITY;

    for attempt in 0..opts.attempts {
        let i = attempt % m;
        let pi = g.central_points().point(i);
        let round = attempt / m;
        let (strategy, x, start) = match round {
            0 => {
                let (eta, _) = null_vector(&g.jacobian_unchecked(pi));
                let s = 0.5 * spread;
                let x: Vec<f64> = pi.iter().zip(eta.iter()).map(|(p, e)| p + s * e).collect();
                let start: Vec<f64> = pi.iter().zip(&x).map(|(p, xi)| 2.0 * p - xi).collect();
                (CollisionStrategy::KernelReflection, x, start)
            }
            r if r % 2 == 1 => {
                let x: Vec<f64> = pi
                    .iter()
                    .map(|p| p + spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let start: Vec<f64> = pi.iter().zip(&x).map(|(p, xi)| 2.0 * p - xi).collect();
                (CollisionStrategy::Reflection, x, start)
            }
            _ => {
                let x: Vec<f64> = (0..m)
                    .map(|_| 2.0 * spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let start: Vec<f64> = (0..m)
                    .map(|_| 2.0 * spread * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                (CollisionStrategy::RandomStart, x, start)
            }
        };
        let target = g.eval_generic(&x);
        let (x_prime, _, iters) = newton_solve(g, &target, &start, 50);
        let gap = linalg::distance(&g.eval_generic(&x), &g.eval_generic(&x_prime));
        let separation = linalg::distance(&x, &x_prime);
        if gap.is_finite() && separation > opts.min_separation {
            best_gap = best_gap.min(gap);
        }
        if gap < opts.gap_tolerance && separation > opts.min_separation {
            return Ok(CollisionPair {
                x,
                x_prime,
                gap,
                separation,
                strategy,
                attempts_used: attempt + 1,
                newton_iterations: iters,
            });
        }
    }
    Err(GdsError::CollisionNotFound {
        attempts: opts.attempts,
        best_gap,
    })
}

/// `det JG(x) = c_xx x1^2 + c_yy x2^2 + c_xy x1 x2 + c_x x1 + c_y x2 + c_0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conic {
    pub c_xx: f64,
    pub c_yy: f64,
    pub c_xy: f64,
    pub c_x: f64,
    pub c_y: f64,
    pub c_0: f64,
}

/// Affine form `a x1 + b x2 + c`.
#[derive(Clone, Copy)]
struct Affine(f64, f64, f64);

impl Affine {
    fn times(self, o: Affine) -> Conic {
        Conic {
            c_xx: self.0 * o.0,
            c_yy: self.1 * o.1,
            c_xy: self.0 * o.1 + self.1 * o.0,
            c_x: self.0 * o.2 + self.2 * o.0,
            c_y: self.1 * o.2 + self.2 * o.1,
            c_0: self.2 * o.2,
        }
    }
}

impl Conic {
    fn minus(self, o: Conic) -> Conic {
        Conic {
            c_xx: self.c_xx - o.c_xx,
            c_yy: self.c_yy - o.c_yy,
            c_xy: self.c_xy - o.c_xy,
            c_x: self.c_x - o.c_x,
            c_y: self.c_y - o.c_y,
            c_0: self.c_0 - o.c_0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        self.c_xx * a * a + self.c_yy * b * b + self.c_xy * a * b + self.c_x * a + self.c_y * b + self.c_0
    }

    pub fn gradient(&self, x: &[f64]) -> [f64; 2] {
        [
            2.0 * self.c_xx * x[0] + self.c_xy * x[1] + self.c_x,
            2.0 * self.c_yy * x[1] + self.c_xy * x[0] + self.c_y,
        ]
    }

    pub fn hessian(&self) -> [[f64; 2]; 2] {
        [[2.0 * self.c_xx, self.c_xy], [self.c_xy, 2.0 * self.c_yy]]
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.c_xx, self.c_yy, self.c_xy, self.c_x, self.c_y, self.c_0]
    }
}

/// Exact coefficients of `det JG` for a planar map, from the expansion
/// `4 [a11 (x1 - p11) a22 (x2 - p22) - a12 (x2 - p12) a21 (x1 - p21)]`.
pub fn conic_coefficients(g: &GdsMap) -> Result<Conic> {
    g.require_equidimensional()?;
    if g.dim() != 2 {
        return Err(GdsError::NotPlanar(g.dim()));
    }
    let a = g.coefficients();
    let p = g.central_points();
    // 2 a_ij (x_j - p_ij) as an affine form
    let entry = |i: usize, j: usize| {
        let s = 2.0 * a.get(i, j);
        if j == 0 {
            Affine(s, 0.0, -s * p.point(i)[0])
        } else {
            Affine(0.0, s, -s * p.point(i)[1])
        }
    };
    Ok(entry(0, 0).times(entry(1, 1)).minus(entry(0, 1).times(entry(1, 0))))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PointClass {
    Fold,
    Cusp,
    Degenerate,
    Unresolved,
}

impl PointClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointClass::Fold => "fold",
            PointClass::Cusp => "cusp",
            PointClass::Degenerate => "degenerate",
            PointClass::Unresolved => "unresolved",
        }
    }
}

/// Whitney quantities at a singular point: unit kernel vector `eta`,
/// `grad(det) . eta` and `eta^T H(det) eta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyData {
    pub eta: [f64; 2],
    pub gradient: [f64; 2],
    pub directional: f64,
    pub curvature: f64,
    pub rank: usize,
}

fn whitney_data(g: &GdsMap, conic: &Conic, x: &[f64], rank_tol: f64) -> WhitneyData {
    let jac: DMatrix<f64> = g.jacobian_unchecked(x);
    let rank = numerical_rank(&jac, rank_tol);
    let (eta, _) = null_vector(&jac);
    let eta = [eta[0], eta[1]];
    let gradient = conic.gradient(x);
    let h = conic.hessian();
    WhitneyData {
        eta,
        gradient,
        directional: gradient[0] * eta[0] + gradient[1] * eta[1],
        curvature: eta[0] * (h[0][0] * eta[0] + h[0][1] * eta[1])
            + eta[1] * (h[1][0] * eta[0] + h[1][1] * eta[1]),
        rank,
    }
}

fn classify_from(data: &WhitneyData, conic: &Conic, tol: f64) -> PointClass {
    if data.rank == 0 {
        return PointClass::Degenerate;
    }
    let grad_norm = data.gradient[0].hypot(data.gradient[1]);
    let hess_norm = conic.hessian().iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if data.directional.abs() > tol * grad_norm.max(1.0) {
        PointClass::Fold
    } else if grad_norm > tol && data.curvature.abs() > tol * hess_norm.max(1.0) {
        PointClass::Cusp
    } else {
        PointClass::Degenerate
    }
}

/// Fold if the kernel is transverse to the singular curve; cusp if it is
/// tangent and the determinant curves along it; otherwise degenerate.
pub fn classify_singular_point(g: &GdsMap, x: &[f64], tol: &Tolerances) -> Result<PointClass> {
    let conic = conic_coefficients(g)?;
    if x.len() != 2 {
        return Err(GdsError::Dimension {
            expected: 2,
            found: x.len(),
        });
    }
    let lambda = conic.eval(x);
    let grad = conic.gradient(x);
    let grad_norm = grad[0].hypot(grad[1]);
    // first-order distance to the curve
    let dist = if grad_norm > 0.0 { lambda.abs() / grad_norm } else { lambda.abs() };
    let jac = g.jacobian_unchecked(x);
    if linalg::max_abs(&jac) == 0.0 {
        return Ok(PointClass::Degenerate);
    }
    if dist > 1e-6 * (1.0 + linalg::norm(x)) && lambda.abs() > tol.trace * linalg::max_abs(&jac).powi(2) {
        return Err(GdsError::InvalidArgument(format!(
            "det JG({:?}) = {lambda:e}; not a singular point",
            x
        )));
    }
    let data = whitney_data(g, &conic, x, tol.matrix_rank);
    Ok(classify_from(&data, &conic, tol.classify))
}

/// Newton iteration along the gradient of `det JG` from `x` onto the
/// singular set of a planar map.
pub fn project_to_singular_set(g: &GdsMap, x: &[f64]) -> Result<[f64; 2]> {
    let conic = conic_coefficients(g)?;
    if x.len() != 2 {
        return Err(GdsError::Dimension {
            expected: 2,
            found: x.len(),
        });
    }
    let mut y = [x[0], x[1]];
    for _ in 0..100 {
        let lambda = conic.eval(&y);
        let grad = conic.gradient(&y);
        let gg = grad[0] * grad[0] + grad[1] * grad[1];
        if gg == 0.0 {
            break;
        }
        let step = [lambda * grad[0] / gg, lambda * grad[1] / gg];
        y = [y[0] - step[0], y[1] - step[1]];
        if step[0].hypot(step[1]) <= 1e-15 * (1.0 + y[0].hypot(y[1])) {
            break;
        }
    }
    if !conic.eval(&y).is_finite() {
        return Err(GdsError::InvalidArgument(format!(
            "projection of {x:?} onto the singular set diverged"
        )));
    }
    Ok(y)
}

/// Axis-aligned window in the plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Window {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(GdsError::InvalidArgument(format!(
                "window needs lo < hi, got {lo:?}..{hi:?}"
            )));
        }
        Ok(Window { lo, hi })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x[0] >= self.lo[0] && x[0] <= self.hi[0] && x[1] >= self.lo[1] && x[1] <= self.hi[1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub step: f64,
    /// Seed-grid cells per axis.
    pub seed_grid: usize,
    pub tolerances: Tolerances,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            step: 1e-2,
            seed_grid: 64,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub classes: Vec<PointClass>,
    pub closed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularCurve {
    pub window: Window,
    pub step: f64,
    pub conic: Conic,
    /// Residual bound every vertex satisfies: `|det JG| < trace_threshold`.
    pub trace_threshold: f64,
    pub components: Vec<Polyline>,
    pub fold_count: usize,
    pub cusp_count: usize,
    pub degenerate_count: usize,
    pub unresolved_count: usize,
    pub cusps: Vec<[f64; 2]>,
    pub central_points: Vec<[f64; 2]>,
}

impl SingularCurve {
    pub fn vertices(&self) -> impl Iterator<Item = (&[f64; 2], PointClass)> {
        self.components
            .iter()
            .flat_map(|c| c.points.iter().zip(c.classes.iter().copied()))
    }
}

struct Tracer<'a> {
    conic: Conic,
    window: Window,
    step: f64,
    threshold: f64,
    g: &'a GdsMap,
}

impl Tracer<'_> {
    /// Newton steps along the gradient onto `det = 0`.
    fn correct(&self, x: [f64; 2]) -> Option<[f64; 2]> {
        let mut y = x;
        for _ in 0..50 {
            let lambda = self.conic.eval(&y);
            if lambda.abs() < self.threshold * 1e-2 {
                return Some(y);
            }
            let gr = self.conic.gradient(&y);
            let g2 = gr[0] * gr[0] + gr[1] * gr[1];
            if g2 == 0.0 || !g2.is_finite() {
                return None;
            }
            y = [y[0] - lambda * gr[0] / g2, y[1] - lambda * gr[1] / g2];
        }
        (self.conic.eval(&y).abs() < self.threshold).then_some(y)
    }

    fn tangent(&self, x: [f64; 2]) -> Option<[f64; 2]> {
        let gr = self.conic.gradient(&x);
        let n = gr[0].hypot(gr[1]);
        (n > 0.0).then(|| [-gr[1] / n, gr[0] / n])
    }

    /// Continues from `start` in the direction `sign * tangent`.
    fn trace_direction(&self, start: [f64; 2], sign: f64, max_steps: usize) -> (Vec<[f64; 2]>, bool) {
        let mut pts = Vec::new();
        let Some(t0) = self.tangent(start) else {
            return (pts, false);
        };
        let mut dir = [sign * t0[0], sign * t0[1]];
        let mut x = start;
        let h_min = self.step / 1024.0;
        for _ in 0..max_steps {
            let mut h = self.step;
            let next = loop {
                let pred = [x[0] + h * dir[0], x[1] + h * dir[1]];
                if let Some(y) = self.correct(pred) {
                    let d = (y[0] - x[0]).hypot(y[1] - x[1]);
                    if d <= 2.0 * self.step && d > 0.1 * h {
                        if let Some(t) = self.tangent(y) {
                            if t[0] * dir[0] + t[1] * dir[1] > 0.5 {
                                break Some((y, t));
                            }
                            if -(t[0] * dir[0] + t[1] * dir[1]) > 0.5 {
                                break Some((y, [-t[0], -t[1]]));
                            }
                        }
                    }
                }
                h *= 0.5;
                if h < h_min {
                    break None;
                }
            };
            let Some((y, t)) = next else {
                break;
            };
            if !self.window.contains(&y) {
                break;
            }
            if pts.len() > 4 && (y[0] - start[0]).hypot(y[1] - start[1]) < 0.75 * self.step {
                return (pts, true);
            }
            pts.push(y);
            x = y;
            dir = t;
        }
        (pts, false)
    }

    fn near_existing(&self, x: [f64; 2], components: &[Polyline]) -> bool {
        components.iter().any(|c| {
            c.points
                .iter()
                .any(|p| (p[0] - x[0]).hypot(p[1] - x[1]) < 1.5 * self.step)
        })
    }

    fn kernel_oriented(&self, x: [f64; 2], reference: Option<[f64; 2]>) -> [f64; 2] {
        let (eta, _) = null_vector(&self.g.jacobian_unchecked(&x));
        let mut e = [eta[0], eta[1]];
        if let Some(r) = reference {
            if e[0] * r[0] + e[1] * r[1] < 0.0 {
                e = [-e[0], -e[1]];
            }
        }
        e
    }

    fn directional(&self, x: [f64; 2], eta: [f64; 2]) -> f64 {
        let gr = self.conic.gradient(&x);
        gr[0] * eta[0] + gr[1] * eta[1]
    }

    /// Bisects along the chord `a -> b` (projected onto the curve) for a zero
    /// of `grad(det) . eta` with a consistently oriented kernel.
    fn locate_cusp(&self, a: [f64; 2], b: [f64; 2], eta_a: [f64; 2]) -> Option<[f64; 2]> {
        let ga = self.directional(a, eta_a);
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut best = None;
        for _ in 0..80 {
            let s = 0.5 * (lo + hi);
            let p = self.correct([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])])?;
            let eta = self.kernel_oriented(p, Some(eta_a));
            let gp = self.directional(p, eta);
            best = Some(p);
            if gp == 0.0 {
                break;
            }
            if gp.signum() == ga.signum() {
                lo = s;
            } else {
                hi = s;
            }
        }
        best
    }
}

/// Traces the zero set of `det JG` inside `window` and classifies every
/// vertex. Cusps between consecutive vertices are located by bisection and
/// inserted as vertices.
pub fn trace_singular_curve(g: &GdsMap, window: &Window, opts: &TraceOptions) -> Result<SingularCurve> {
    opts.tolerances.validate()?;
    let conic = conic_coefficients(g)?;
    if !(opts.step > 0.0) {
        return Err(GdsError::InvalidArgument("step must be positive".into()));
    }
    let n = opts.seed_grid.max(4);
    let node = |i: usize, j: usize| {
        [
            window.lo[0] + (window.hi[0] - window.lo[0]) * i as f64 / n as f64,
            window.lo[1] + (window.hi[1] - window.lo[1]) * j as f64 / n as f64,
        ]
    };
    let mut values = vec![vec![0.0; n + 1]; n + 1];
    let mut lambda_scale = 1.0f64;
    for (i, row) in values.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = conic.eval(&node(i, j));
            lambda_scale = lambda_scale.max(v.abs());
        }
    }
    let tracer = Tracer {
        conic,
        window: *window,
        step: opts.step,
        threshold: opts.tolerances.trace * lambda_scale,
        g,
    };

    // sign-change seeds on grid edges
    let mut seeds: Vec<[f64; 2]> = Vec::new();
    for i in 0..=n {
        for j in 0..=n {
            let here = values[i][j];
            let mut edge = |ni: usize, nj: usize| {
                let there = values[ni][nj];
                if here == 0.0 || here.signum() != there.signum() {
                    let s = if here == there { 0.0 } else { here / (here - there) };
                    let (a, b) = (node(i, j), node(ni, nj));
                    seeds.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
                }
            };
            if i < n {
                edge(i + 1, j);
            }
            if j < n {
                edge(i, j + 1);
            }
        }
    }

    let diag = (window.hi[0] - window.lo[0]).hypot(window.hi[1] - window.lo[1]);
    let max_steps = ((50.0 * diag / opts.step) as usize).max(1000);
    let mut components: Vec<Polyline> = Vec::new();
    for seed in seeds {
        let Some(start) = tracer.correct(seed) else {
            continue;
        };
        if !window.contains(&start) || tracer.near_existing(start, &components) {
            continue;
        }
        let (forward, closed) = tracer.trace_direction(start, 1.0, max_steps);
        let mut points: Vec<[f64; 2]> = Vec::new();
        if !closed {
            let (mut backward, _) = tracer.trace_direction(start, -1.0, max_steps);
            backward.reverse();
            points.extend(backward);
        }
        points.push(start);
        points.extend(forward);
        components.push(Polyline {
            points,
            classes: Vec::new(),
            closed,
        });
    }

    let mut cusps = Vec::new();
    let (mut folds, mut cusp_count, mut degenerate, mut unresolved) = (0, 0, 0, 0);
    let rank_tol = opts.tolerances.matrix_rank;
    for comp in &mut components {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(comp.points.len() + 2);
        let mut classes = Vec::with_capacity(comp.points.len() + 2);
        let mut prev: Option<([f64; 2], [f64; 2], f64)> = None;
        for &p in &comp.points {
            let eta = tracer.kernel_oriented(p, prev.map(|v| v.1));
            let gp = tracer.directional(p, eta);
            if let Some((a, eta_a, ga)) = prev {
                if ga != 0.0 && gp != 0.0 && ga.signum() != gp.signum() {
                    match tracer.locate_cusp(a, p, eta_a) {
                        Some(c) => {
                            pts.push(c);
                            let data = whitney_data(g, &conic, &c, rank_tol);
                            classes.push(classify_from(&data, &conic, opts.tolerances.classify));
                        }
                        None => {
                            pts.push(p);
                            classes.push(PointClass::Unresolved);
                        }
                    }
                }
            }
            let data = whitney_data(g, &conic, &p, rank_tol);
            pts.push(p);
            classes.push(classify_from(&data, &conic, opts.tolerances.classify));
            prev = Some((p, eta, gp));
        }
        for (p, c) in pts.iter().zip(&classes) {
            match c {
                PointClass::Fold => folds += 1,
                PointClass::Cusp => {
                    cusp_count += 1;
                    cusps.push(*p);
                }
                PointClass::Degenerate => degenerate += 1,
                PointClass::Unresolved => unresolved += 1,
            }
        }
        comp.points = pts;
        comp.classes = classes;
    }

    Ok(SingularCurve {
        window: *window,
        step: opts.step,
        conic,
        trace_threshold: tracer.threshold,
        components,
        fold_count: folds,
        cusp_count,
        degenerate_count: degenerate,
        unresolved_count: unresolved,
        cusps,
        central_points: g
            .central_points()
            .points()
            .iter()
            .map(|p| [p[0], p[1]])
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{distance_squared_map, CentralPoints};

    #[test]
    fn determinant_examples() {
        let g = GdsMap::from_rows(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let j = g.jacobian_closed_form(&[0.0, 0.0]).unwrap();
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -2.0, 0.0]));
        assert_eq!(det_jacobian(&g, &[0.0, 0.0]).unwrap(), 0.0);
        let g1 = GdsMap::from_rows(vec![vec![1.5]], vec![vec![0.25]]).unwrap();
        assert_eq!(det_jacobian(&g1, &[2.25]).unwrap(), 2.0 * 1.5 * 2.0);
        assert_eq!(det_jacobian(&g1, &[0.25]).unwrap(), 0.0);
    }

    #[test]
    fn lemma_singular_one_dimensional() {
        let g = GdsMap::from_rows(vec![vec![-2.0]], vec![vec![1.0]]).unwrap();
        let rep = verify_lemma_singular(&g, 1e-10).unwrap();
        assert!(rep.all_pass);
        assert_eq!(rep.centers[0].rank, 0);
    }

    #[test]
    fn common_center_reflection_collides() {
        let c = [0.5, -0.25];
        let g = distance_squared_map(CentralPoints::repeated(&c, 2).unwrap());
        let x = [1.7, 0.3];
        let mirrored = [2.0 * c[0] - x[0], 2.0 * c[1] - x[1]];
        assert_eq!(g.eval(&x).unwrap(), g.eval(&mirrored).unwrap());
        let pair = find_collision(&g, &CollisionOptions::default()).unwrap();
        assert!(pair.gap < 1e-9 && pair.separation > 1e-3);
    }

    #[test]
    fn reflection_newton_on_all_ones_map() {
        let g = GdsMap::from_rows(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![0.3, -0.8], vec![-1.1, 0.4]],
        )
        .unwrap();
        let x = [0.9, 1.4];
        let start = [2.0 * 0.3 - x[0], 2.0 * -0.8 - x[1]];
        let (xp, residual, _) = newton_solve(&g, &g.eval(&x).unwrap(), &start, 50);
        assert!(residual < 1e-12);
        assert!(linalg::distance(&x, &xp) > 1e-3);
    }

    #[test]
    fn conic_has_no_squared_terms() {
        let g = GdsMap::from_rows(
            vec![vec![1.3, -0.4], vec![2.2, 0.7]],
            vec![vec![0.1, 0.9], vec![-0.6, 0.2]],
        )
        .unwrap();
        let c = conic_coefficients(&g).unwrap();
        assert_eq!((c.c_xx, c.c_yy), (0.0, 0.0));
        let expected = 4.0 * (1.3 * 0.7 - (-0.4) * 2.2);
        assert!((c.c_xy - expected).abs() < 1e-14);
        for x in [[0.3, -1.2], [2.0, 0.5], [-0.7, 0.0]] {
            let d = det_jacobian(&g, &x).unwrap();
            assert!((c.eval(&x) - d).abs() <= 1e-12 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn conic_requires_planar_map() {
        let g = distance_squared_map(CentralPoints::new(vec![vec![0.0; 3]; 3]).unwrap());
        assert_eq!(conic_coefficients(&g), Err(GdsError::NotPlanar(3)));
    }

    #[test]
    fn degenerate_when_jacobian_vanishes() {
        // both rows vanish where x equals both centers
        let g = distance_squared_map(CentralPoints::repeated(&[1.0, 1.0], 2).unwrap());
        let class = classify_singular_point(&g, &[1.0, 1.0], &Tolerances::default()).unwrap();
        assert_eq!(class, PointClass::Degenerate);
    }

    #[test]
    fn non_singular_point_rejected() {
        let g = GdsMap::from_rows(
            vec![vec![1.0, 2.0], vec![3.0, -1.0]],
            vec![vec![0.0, 0.0], vec![1.0, 1.0]],
        )
        .unwrap();
        assert!(classify_singular_point(&g, &[5.0, -3.0], &Tolerances::default()).is_err());
    }

    #[test]
    fn empty_window_gives_empty_curve() {
        let g = GdsMap::from_rows(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        // D_p with two centers: det = -4 x2 (up to sign), singular set is x2 = 0
        let window = Window::new([0.0, 5.0], [1.0, 6.0]).unwrap();
        let curve = trace_singular_curve(&g, &window, &TraceOptions::default()).unwrap();
        assert!(curve.components.is_empty());
        let window = Window::new([-2.0, -1.0], [3.0, 1.0]).unwrap();
        let curve = trace_singular_curve(&g, &window, &TraceOptions::default()).unwrap();
        assert_eq!(curve.components.len(), 1);
        assert!(curve.vertices().all(|(p, _)| p[1].abs() < 1e-9));
        assert_eq!(curve.cusp_count, 0);
    }
}
