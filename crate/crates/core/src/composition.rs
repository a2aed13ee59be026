//! `G o f`: its Jacobian, the pair map, and numerical immersion/injectivity
//! checks.
//!
//! Both checks scan a parameter grid, then polish the most suspicious
//! candidates locally, and finally issue a three-way verdict against
//! scale-aware thresholds. Parallel work is reduced by value with ties broken
//! on the lexicographically smallest witness, so reports do not depend on
//! scheduling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dual::{forward_jacobian, Dual};
use crate::error::{GdsError, Result};
use crate::linalg::{self, smallest_singular_value};
use crate::manifolds::ParamManifold;
use crate::maps::GdsMap;
use crate::tolerances::{problem_scale, Tolerances};

const COMPACTNESS_NOTE: &str =
    "parameter domain is a compact box/torus; the check covers that domain only";

/// A map from the parameter domain of a manifold into some `R^k`, with an
/// exact Jacobian. Implemented by `G o f` and by `f` alone.
pub trait ImageMap: Sync {
    fn manifold(&self) -> &ParamManifold;
    fn target_dim(&self) -> usize;
    /// Magnitude of the coefficients, folded into the problem scale.
    fn coefficient_scale(&self) -> f64;
    /// Value at a canonical (already wrapped) parameter.
    fn value(&self, q: &[f64]) -> Vec<f64>;
    /// Jacobian (`target_dim x n`) at a canonical parameter.
    fn jacobian(&self, q: &[f64]) -> DMatrix<f64>;
}

/// `G_(p,A) o f` for an equidimensional `G` on the ambient space of `f`.
#[derive(Clone, Copy, Debug)]
pub struct Composition<'a> {
    g: &'a GdsMap,
    f: &'a ParamManifold,
}

impl<'a> Composition<'a> {
    pub fn new(g: &'a GdsMap, f: &'a ParamManifold) -> Result<Self> {
        g.require_equidimensional()?;
        if g.dim() != f.ambient_dim() {
            return Err(GdsError::Dimension {
                expected: g.dim(),
                found: f.ambient_dim(),
            });
        }
        Ok(Composition { g, f })
    }

    pub fn map(&self) -> &GdsMap {
        self.g
    }
}

impl ImageMap for Composition<'_> {
    fn manifold(&self) -> &ParamManifold {
        self.f
    }

    fn target_dim(&self) -> usize {
        self.g.rows()
    }

    fn coefficient_scale(&self) -> f64 {
        self.g.coefficients().max_abs()
    }

    fn value(&self, q: &[f64]) -> Vec<f64> {
        self.g.eval_generic(&self.f.eval_generic(q))
    }

    fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        chain_rule_jacobian(self.g, self.f, q)
    }
}

/// The manifold itself, viewed as a map into its ambient space.
#[derive(Clone, Copy, Debug)]
pub struct Bare<'a>(pub &'a ParamManifold);

impl ImageMap for Bare<'_> {
    fn manifold(&self) -> &ParamManifold {
        self.0
    }

    fn target_dim(&self) -> usize {
        self.0.ambient_dim()
    }

    fn coefficient_scale(&self) -> f64 {
        1.0
    }

    fn value(&self, q: &[f64]) -> Vec<f64> {
        self.0.eval_generic(q)
    }

    fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        self.0.jacobian_unchecked(q)
    }
}

/// Entry `(i, k)` is `2 sum_j a_ij (f_j(q) - p_ij) df_j/dt_k(q)`.
fn chain_rule_jacobian(g: &GdsMap, f: &ParamManifold, q: &[f64]) -> DMatrix<f64> {
    let x = f.eval_generic(q);
    let jf = f.jacobian_unchecked(q);
    let (m, n) = (g.rows(), f.source_dim());
    let a = g.coefficients();
    let p = g.central_points();
    DMatrix::from_fn(m, n, |i, k| {
        let center = p.point(i);
        let mut acc = 0.0;
        for j in 0..x.len() {
            acc += a.get(i, j) * (x[j] - center[j]) * jf[(j, k)];
        }
        2.0 * acc
    })
}

/// Jacobian of `G o f` at `q` by the chain-rule row formula.
pub fn composition_jacobian(g: &GdsMap, f: &ParamManifold, q: &[f64]) -> Result<DMatrix<f64>> {
    Composition::new(g, f)?;
    let q = f.domain().wrap(q)?;
    Ok(chain_rule_jacobian(g, f, &q))
}

/// Jacobian of `q -> G(f(q))` by dual-number differentiation.
pub fn composition_jacobian_ad(g: &GdsMap, f: &ParamManifold, q: &[f64]) -> Result<DMatrix<f64>> {
    Composition::new(g, f)?;
    let q = f.domain().wrap(q)?;
    let rows = forward_jacobian(|v: &[Dual]| g.eval_generic(&f.eval_generic(v)), &q);
    Ok(DMatrix::from_fn(g.rows(), f.source_dim(), |i, k| rows[i][k]))
}

/// `(G o f)(q)`.
pub fn compose_eval(g: &GdsMap, f: &ParamManifold, q: &[f64]) -> Result<Vec<f64>> {
    let comp = Composition::new(g, f)?;
    let q = f.domain().wrap(q)?;
    Ok(comp.value(&q))
}

/// The pair map `((G o f)(q), (G o f)(q'))` in `R^{2m}`.
pub fn gamma_pair(g: &GdsMap, f: &ParamManifold, q: &[f64], q2: &[f64]) -> Result<Vec<f64>> {
    let mut out = compose_eval(g, f, q)?;
    out.extend(compose_eval(g, f, q2)?);
    Ok(out)
}

/// Distance of a point of `R^{2m}` to the diagonal `{(y, y)}`; equals
/// `|first - second| / sqrt(2)`.
pub fn distance_to_diagonal(pair: &[f64]) -> f64 {
    let m = pair.len() / 2;
    linalg::distance(&pair[..m], &pair[m..]) / std::f64::consts::SQRT_2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImmersionVerdict {
    Immersion,
    RankDrop,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectivityVerdict {
    Injective,
    Collision,
    Inconclusive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingVerdict {
    EmbeddingCandidate,
    NotEmbedding,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmersionOptions {
    /// Per-axis grid resolution; `None` uses the manifold default.
    pub grid: Option<Vec<usize>>,
    pub refine_rounds: usize,
    pub tolerances: Tolerances,
}

impl Default for ImmersionOptions {
    fn default() -> Self {
        ImmersionOptions {
            grid: None,
            refine_rounds: 40,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub grid: Vec<usize>,
    /// Smallest sigma_n seen on the grid alone.
    pub screened_sigma_min: f64,
    pub sigma_min: f64,
    pub witness: Vec<f64>,
    pub refined: bool,
    pub refined_cells: usize,
    pub verdict: ImmersionVerdict,
    pub scale: f64,
    pub rank_threshold: f64,
    pub margin_threshold: f64,
    pub tolerances: Tolerances,
    pub note: String,
    /// `(parameter, sigma_n)` for every grid point; exported as CSV only.
    #[serde(skip)]
    pub grid_values: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectivityOptions {
    pub grid: Option<Vec<usize>>,
    /// Exclusion radius around the diagonal, in the domain metric.
    pub delta: f64,
    /// Local minimizations per separation band, seeded from the band's best
    /// screened pairs.
    pub starts: usize,
    pub max_iterations: usize,
    pub tolerances: Tolerances,
}

impl Default for InjectivityOptions {
    fn default() -> Self {
        InjectivityOptions {
            grid: None,
            delta: 1e-2,
            starts: 8,
            max_iterations: 200,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub grid: Vec<usize>,
    pub delta: f64,
    pub q: Vec<f64>,
    pub q_prime: Vec<f64>,
    pub image_gap: f64,
    pub separation: f64,
    /// Smallest gap among grid pairs with separation >= delta.
    pub screened_min_gap: f64,
    /// Lower edges of the separation bands screened separately.
    pub band_edges: Vec<f64>,
    pub starts_run: usize,
    pub verdict: InjectivityVerdict,
    pub scale: f64,
    pub collision_threshold: f64,
    pub margin_threshold: f64,
    pub tolerances: Tolerances,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub immersion: RankReport,
    pub injectivity: CollisionReport,
    pub verdict: EmbeddingVerdict,
}

fn resolve_grid(f: &ParamManifold, grid: &Option<Vec<usize>>) -> Result<Vec<usize>> {
    let res = grid.clone().unwrap_or_else(|| f.default_grid());
    if res.len() != f.source_dim() {
        return Err(GdsError::InvalidArgument(format!(
            "grid has {} axes, manifold has {}",
            res.len(),
            f.source_dim()
        )));
    }
    if res.iter().any(|&r| r < 2) {
        return Err(GdsError::InvalidArgument("grid resolution must be >= 2".into()));
    }
    Ok(res)
}

/// Diagonal of the bounding box of the image points.
fn bounding_diameter(points: &[Vec<f64>]) -> f64 {
    let Some(first) = points.first() else {
        return 0.0;
    };
    let k = first.len();
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for p in points {
        for j in 0..k {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    lo.iter()
        .zip(&hi)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

fn classify_margin<V>(margin: f64, fail_below: f64, pass_above: f64, fail: V, pass: V, unsure: V) -> V {
    if margin < fail_below {
        fail
    } else if margin > pass_above {
        pass
    } else {
        unsure
    }
}

/// Immersion check for `G o f`.
pub fn immersion_check(g: &GdsMap, f: &ParamManifold, opts: &ImmersionOptions) -> Result<RankReport> {
    let comp = Composition::new(g, f)?;
    immersion_check_map(&comp, opts)
}

/// Scans `sigma_n` of the Jacobian of `map` on a grid, refines the lowest 1%
/// of grid cells, and classifies the global minimum.
pub fn immersion_check_map<M: ImageMap>(map: &M, opts: &ImmersionOptions) -> Result<RankReport> {
    opts.tolerances.validate()?;
    let f = map.manifold();
    let (k, n) = (map.target_dim(), f.source_dim());
    if n > k {
        return Err(GdsError::SourceTooLarge { n, m: k });
    }
    let res = resolve_grid(f, &opts.grid)?;
    let domain = f.domain();
    let points = domain.grid(&res);

    let evaluated: Vec<(f64, Vec<f64>)> = points
        .par_iter()
        .map(|q| (smallest_singular_value(&map.jacobian(q)), map.value(q)))
        .collect();
    let images: Vec<Vec<f64>> = evaluated.iter().map(|(_, v)| v.clone()).collect();
    let sigmas: Vec<f64> = evaluated.iter().map(|(s, _)| *s).collect();

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| sigmas[a].total_cmp(&sigmas[b]).then(a.cmp(&b)));
    let screened = sigmas[order[0]];

    let refine_count = if opts.refine_rounds == 0 {
        0
    } else {
        points.len().div_ceil(100).max(1)
    };
    let spacing: Vec<f64> = domain
        .axes()
        .iter()
        .zip(&res)
        .map(|(ax, &r)| ax.spacing(r))
        .collect();

    let refined: Vec<(f64, Vec<f64>)> = order[..refine_count]
        .par_iter()
        .map(|&idx| refine_minimum(map, &points[idx], sigmas[idx], &spacing, opts.refine_rounds))
        .collect();

    let mut best = (screened, points[order[0]].clone());
    for cand in refined {
        if cand.0 < best.0 || (cand.0 == best.0 && lex_cmp(&cand.1, &best.1) == Ordering::Less) {
            best = cand;
        }
    }

    let scale = problem_scale(&[map.coefficient_scale(), bounding_diameter(&images)]);
    let rank_threshold = opts.tolerances.rank * scale;
    let margin_threshold = opts.tolerances.margin * scale;
    let verdict = classify_margin(
        best.0,
        rank_threshold,
        margin_threshold,
        ImmersionVerdict::RankDrop,
        ImmersionVerdict::Immersion,
        ImmersionVerdict::Inconclusive,
    );
    Ok(RankReport {
        grid: res,
        screened_sigma_min: screened,
        sigma_min: best.0,
        witness: best.1,
        refined: refine_count > 0,
        refined_cells: refine_count,
        verdict,
        scale,
        rank_threshold,
        margin_threshold,
        tolerances: opts.tolerances,
        note: COMPACTNESS_NOTE.into(),
        grid_values: points.into_iter().zip(sigmas).collect(),
    })
}

/// Local lattice search: evaluate offsets `{-h, -h/2, 0, h/2, h}` per axis
/// around the current best point, recentre, halve `h`.
fn refine_minimum<M: ImageMap>(
    map: &M,
    start: &[f64],
    start_sigma: f64,
    spacing: &[f64],
    rounds: usize,
) -> (f64, Vec<f64>) {
    let domain = map.manifold().domain();
    let n = start.len();
    let mut best = (start_sigma, start.to_vec());
    let mut h = spacing.to_vec();
    const OFFSETS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];
    for _ in 0..rounds {
        let center = best.1.clone();
        let total = OFFSETS.len().pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let mut q = Vec::with_capacity(n);
            for k in 0..n {
                q.push(center[k] + OFFSETS[c % OFFSETS.len()] * h[k]);
                c /= OFFSETS.len();
            }
            let q = domain.project(&q);
            let s = smallest_singular_value(&map.jacobian(&q));
            if s < best.0 || (s == best.0 && lex_cmp(&q, &best.1) == Ordering::Less) {
                best = (s, q);
            }
        }
        for hk in h.iter_mut() {
            *hk *= 0.5;
        }
    }
    best
}

/// Injectivity check for `G o f`.
pub fn injectivity_check(
    g: &GdsMap,
    f: &ParamManifold,
    opts: &InjectivityOptions,
) -> Result<CollisionReport> {
    let comp = Composition::new(g, f)?;
    injectivity_check_map(&comp, opts)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Candidate {
    gap: f64,
    i: usize,
    j: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gap
            .total_cmp(&other.gap)
            .then(self.i.cmp(&other.i))
            .then(self.j.cmp(&other.j))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// For each separation band `[edges[k], edges[k + 1])` (the last one open),
/// the `keep` smallest image gaps among grid pairs in that band, via a sweep
/// over the image coordinate of largest spread.
fn screen_pairs(
    params: &[Vec<f64>],
    images: &[Vec<f64>],
    f: &ParamManifold,
    edges: &[f64],
    keep: usize,
) -> Vec<Vec<Candidate>> {
    let domain = f.domain();
    let k = images.first().map_or(0, Vec::len);
    let axis = (0..k)
        .max_by(|&a, &b| {
            let spread = |j: usize| {
                let (lo, hi) = images
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                        (lo.min(p[j]), hi.max(p[j]))
                    });
                hi - lo
            };
            spread(a).total_cmp(&spread(b))
        })
        .unwrap_or(0);
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.sort_by(|&a, &b| images[a][axis].total_cmp(&images[b][axis]).then(a.cmp(&b)));

    let mut heaps: Vec<BinaryHeap<Candidate>> =
        (0..edges.len()).map(|_| BinaryHeap::with_capacity(keep + 1)).collect();
    // largest gap any band still needs; pairs farther apart along the sweep
    // axis cannot enter any heap
    let bound = |heaps: &[BinaryHeap<Candidate>]| {
        heaps.iter().fold(0.0f64, |acc, h| {
            if h.len() < keep {
                f64::INFINITY
            } else {
                acc.max(h.peek().map_or(f64::INFINITY, |c| c.gap))
            }
        })
    };
    let mut worst = f64::INFINITY;
    for (pos, &a) in order.iter().enumerate() {
        for &b in &order[pos + 1..] {
            if images[b][axis] - images[a][axis] > worst {
                break;
            }
            let sep = domain.separation(&params[a], &params[b]);
            if sep < edges[0] {
                continue;
            }
            let band = edges.partition_point(|&e| e <= sep) - 1;
            let gap = linalg::distance(&images[a], &images[b]);
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            let cand = Candidate { gap, i, j };
            let heap = &mut heaps[band];
            if heap.len() < keep {
                heap.push(cand);
            } else if cand < *heap.peek().expect("non-empty") {
                heap.pop();
                heap.push(cand);
            } else {
                continue;
            }
            worst = bound(&heaps);
        }
    }
    heaps.into_iter().map(BinaryHeap::into_sorted_vec).collect()
}

/// Separation band edges: `delta`, then geometric steps of 4 (the first at
/// least four grid cells wide) up to the domain diameter.
fn separation_bands(delta: f64, spacing: f64, diameter: f64) -> Vec<f64> {
    let mut edges = vec![delta];
    let mut next = (4.0 * delta).max(4.0 * spacing);
    while next < diameter {
        edges.push(next);
        next *= 4.0;
    }
    edges
}

/// Distance between two unordered parameter pairs.
fn pair_distance(f: &ParamManifold, a: (&[f64], &[f64]), b: (&[f64], &[f64])) -> f64 {
    let d = f.domain();
    let straight = d.separation(a.0, b.0).max(d.separation(a.1, b.1));
    let swapped = d.separation(a.0, b.1).max(d.separation(a.1, b.0));
    straight.min(swapped)
}

/// Screens grid pairs, then minimizes the squared image gap from the best
/// distinct candidates subject to `separation >= delta`.
pub fn injectivity_check_map<M: ImageMap>(
    map: &M,
    opts: &InjectivityOptions,
) -> Result<CollisionReport> {
    opts.tolerances.validate()?;
    let f = map.manifold();
    let domain = f.domain();
    if !(opts.delta > 0.0) {
        return Err(GdsError::InvalidArgument(format!(
            "exclusion radius must be positive, got {}",
            opts.delta
        )));
    }
    if opts.delta > domain.diameter() {
        return Err(GdsError::ExclusionTooLarge {
            delta: opts.delta,
            diameter: domain.diameter(),
        });
    }
    let res = resolve_grid(f, &opts.grid)?;
    let params = domain.grid(&res);
    let images: Vec<Vec<f64>> = params.par_iter().map(|q| map.value(q)).collect();
    let scale = problem_scale(&[map.coefficient_scale(), bounding_diameter(&images)]);

    let max_spacing = domain
        .axes()
        .iter()
        .zip(&res)
        .map(|(ax, &r)| ax.spacing(r))
        .fold(0.0, f64::max);
    let edges = separation_bands(opts.delta, max_spacing, domain.diameter());
    let starts = opts.starts.max(1);
    let bands = screen_pairs(&params, &images, f, &edges, starts * 16);
    let Some(first) = bands.iter().filter_map(|b| b.first()).min().copied() else {
        return Err(GdsError::InvalidArgument(
            "no grid pair satisfies the exclusion radius; refine the grid".into(),
        ));
    };
    let screened_min_gap = first.gap;

    // Each band seeds its own starts: near the diagonal small gaps reflect
    // local contraction, far from it they indicate near-collisions.
    let mut seeds: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for band in &bands {
        let mut taken = 0;
        for c in band {
            if taken == starts {
                break;
            }
            let pair = (params[c.i].as_slice(), params[c.j].as_slice());
            let distinct = seeds
                .iter()
                .all(|s| pair_distance(f, (&s.0, &s.1), pair) > 4.0 * max_spacing);
            if distinct {
                seeds.push((params[c.i].clone(), params[c.j].clone()));
                taken += 1;
            }
        }
    }

    let polished: Vec<(f64, Vec<f64>, Vec<f64>)> = seeds
        .par_iter()
        .map(|(q, q2)| minimize_gap(map, q, q2, opts.delta, opts.max_iterations))
        .collect();

    let mut best = (
        screened_min_gap,
        params[first.i].clone(),
        params[first.j].clone(),
    );
    for cand in polished {
        let better = cand.0 < best.0
            || (cand.0 == best.0
                && lex_cmp(&[cand.1.clone(), cand.2.clone()].concat(), &[best.1.clone(), best.2.clone()].concat())
                    == Ordering::Less);
        if better {
            best = cand;
        }
    }

    let collision_threshold = opts.tolerances.collision * scale;
    let margin_threshold = opts.tolerances.margin * scale;
    let verdict = classify_margin(
        best.0,
        collision_threshold,
        margin_threshold,
        InjectivityVerdict::Collision,
        InjectivityVerdict::Injective,
        InjectivityVerdict::Inconclusive,
    );
    let separation = domain.separation(&best.1, &best.2);
    Ok(CollisionReport {
        grid: res,
        delta: opts.delta,
        q: best.1,
        q_prime: best.2,
        image_gap: best.0,
        separation,
        screened_min_gap,
        band_edges: edges,
        starts_run: seeds.len(),
        verdict,
        scale,
        collision_threshold,
        margin_threshold,
        tolerances: opts.tolerances,
        note: format!(
            "{COMPACTNESS_NOTE}; pairs closer than delta = {} are excluded, and there an immersion \
             with positive sigma_min is injective on sufficiently small neighbourhoods by the \
             inverse function theorem, so combine with the immersion margin for full injectivity",
            opts.delta
        ),
    })
}

/// Enforces `separation(q, q2) >= delta` by pushing the pair apart along their
/// shortest difference.
fn enforce_separation(f: &ParamManifold, q: &mut Vec<f64>, q2: &mut Vec<f64>, delta: f64) {
    let domain = f.domain();
    *q = domain.project(q);
    *q2 = domain.project(q2);
    let target = delta * (1.0 + 1e-9);
    for _ in 0..4 {
        if domain.separation(q, q2) >= delta {
            return;
        }
        let mut diff = domain.difference(q, q2);
        let norm = linalg::norm(&diff);
        if norm == 0.0 {
            diff = vec![0.0; diff.len()];
            diff[0] = 1.0;
        } else {
            diff.iter_mut().for_each(|d| *d /= norm);
        }
        let mid: Vec<f64> = q2
            .iter()
            .zip(domain.difference(q, q2))
            .map(|(b, d)| b + 0.5 * d)
            .collect();
        let a: Vec<f64> = mid.iter().zip(&diff).map(|(m, d)| m + 0.5 * target * d).collect();
        let b: Vec<f64> = mid.iter().zip(&diff).map(|(m, d)| m - 0.5 * target * d).collect();
        *q = domain.project(&a);
        *q2 = domain.project(&b);
        if domain.separation(q, q2) < delta {
            // a bounded axis clamped one end; move the other end away from it
            let b: Vec<f64> = q.iter().zip(&diff).map(|(a, d)| a - target * d).collect();
            *q2 = domain.project(&b);
            if domain.separation(q, q2) < delta {
                let a: Vec<f64> = q2.iter().zip(&diff).map(|(b, d)| b + target * d).collect();
                *q = domain.project(&a);
            }
        }
    }
}

/// Projected Gauss-Newton/gradient descent with backtracking on
/// `0.5 |F(q) - F(q2)|^2`. Returns `(gap, q, q2)`.
fn minimize_gap<M: ImageMap>(
    map: &M,
    q0: &[f64],
    q20: &[f64],
    delta: f64,
    max_iterations: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let f = map.manifold();
    let n = f.source_dim();
    let (mut q, mut q2) = (q0.to_vec(), q20.to_vec());
    enforce_separation(f, &mut q, &mut q2, delta);

    let residual = |a: &[f64], b: &[f64]| -> Vec<f64> {
        map.value(a)
            .iter()
            .zip(map.value(b))
            .map(|(x, y)| x - y)
            .collect()
    };
    let objective = |r: &[f64]| 0.5 * r.iter().map(|v| v * v).sum::<f64>();

    let mut r = residual(&q, &q2);
    let mut phi = objective(&r);
    for _ in 0..max_iterations {
        if phi == 0.0 {
            break;
        }
        let ja = map.jacobian(&q);
        let jb = map.jacobian(&q2);
        let k = r.len();
        let jac = DMatrix::from_fn(k, 2 * n, |i, c| {
            if c < n {
                ja[(i, c)]
            } else {
                -jb[(i, c - n)]
            }
        });
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.norm() == 0.0 {
            break;
        }
        let mut normal = jac.transpose() * &jac;
        let damping = 1e-12 * normal.diagonal().amax().max(1e-300);
        for d in 0..2 * n {
            normal[(d, d)] += damping;
        }
        let gauss_newton = linalg::solve(&normal, &(-&grad));

        let mut improved = false;
        let directions: Vec<DVector<f64>> = match gauss_newton {
            Some(step) if step.dot(&grad) < 0.0 => vec![step, -&grad],
            _ => vec![-&grad],
        };
        'dirs: for dir in &directions {
            let slope = dir.dot(&grad);
            let mut step = 1.0;
            for _ in 0..60 {
                let mut qa: Vec<f64> = (0..n).map(|c| q[c] + step * dir[c]).collect();
                let mut qb: Vec<f64> = (0..n).map(|c| q2[c] + step * dir[n + c]).collect();
                enforce_separation(f, &mut qa, &mut qb, delta);
                let ra = residual(&qa, &qb);
                let pa = objective(&ra);
                if pa < phi && pa <= phi + 1e-4 * step * slope {
                    q = qa;
                    q2 = qb;
                    r = ra;
                    phi = pa;
                    improved = true;
                    break 'dirs;
                }
                step *= 0.5;
            }
        }
        if !improved {
            break;
        }
    }
    let gap = (2.0 * phi).sqrt();
    (gap, q, q2)
}

/// Both checks; an embedding candidate iff the immersion and injectivity
/// verdicts both pass (the domain is compact).
pub fn injective_immersion_check(
    g: &GdsMap,
    f: &ParamManifold,
    immersion: &ImmersionOptions,
    injectivity: &InjectivityOptions,
) -> Result<EmbeddingReport> {
    let comp = Composition::new(g, f)?;
    injective_immersion_check_map(&comp, immersion, injectivity)
}

pub fn injective_immersion_check_map<M: ImageMap>(
    map: &M,
    immersion: &ImmersionOptions,
    injectivity: &InjectivityOptions,
) -> Result<EmbeddingReport> {
    let rank = immersion_check_map(map, immersion)?;
    let collision = injectivity_check_map(map, injectivity)?;
    let verdict = match (rank.verdict, collision.verdict) {
        (ImmersionVerdict::Immersion, InjectivityVerdict::Injective) => {
            EmbeddingVerdict::EmbeddingCandidate
        }
        (ImmersionVerdict::RankDrop, _) | (_, InjectivityVerdict::Collision) => {
            EmbeddingVerdict::NotEmbedding
        }
        _ => EmbeddingVerdict::Inconclusive,
    };
    Ok(EmbeddingReport {
        immersion: rank,
        injectivity: collision,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::{circle, cusp_curve, figure_eight, trefoil};
    use crate::maps::{distance_squared_map, CentralPoints};

    #[test]
    fn hand_chain_rule_example() {
        let f = circle(1.0, &[0.0, 0.0], 2).unwrap();
        let g = GdsMap::from_rows(
            vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![vec![2.0, 0.0], vec![0.0, 2.0]],
        )
        .unwrap();
        let j = composition_jacobian(&g, &f, &[0.0]).unwrap();
        assert_eq!((j.nrows(), j.ncols()), (2, 1));
        assert!((j[(0, 0)] - 0.0).abs() < 1e-15);
        assert!((j[(1, 0)] + 4.0).abs() < 1e-15);
    }

    #[test]
    fn centers_at_image_point_zero_the_jacobian() {
        let f = trefoil();
        let x = f.eval(&[1.3]).unwrap();
        let g = distance_squared_map(CentralPoints::repeated(&x, 3).unwrap());
        let j = composition_jacobian(&g, &f, &[1.3]).unwrap();
        assert!(j.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn composition_rejects_mismatched_dimensions() {
        let f = trefoil();
        let g = distance_squared_map(CentralPoints::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap());
        assert!(composition_jacobian(&g, &f, &[0.0]).is_err());
        let rect = GdsMap::from_rows(vec![vec![1.0, 1.0, 1.0]], vec![vec![0.0; 3]]).unwrap();
        assert!(matches!(
            composition_jacobian(&rect, &f, &[0.0]),
            Err(GdsError::NotEquidimensional { .. })
        ));
    }

    #[test]
    fn gamma_pair_on_diagonal() {
        let f = figure_eight();
        let g = GdsMap::from_rows(
            vec![vec![1.0, -2.0], vec![0.5, 3.0]],
            vec![vec![0.3, 0.1], vec![-0.7, 0.4]],
        )
        .unwrap();
        let pair = gamma_pair(&g, &f, &[0.4], &[0.4]).unwrap();
        assert_eq!(pair[..2], pair[2..]);
        assert_eq!(distance_to_diagonal(&pair), 0.0);
        let pair = gamma_pair(&g, &f, &[0.0], &[std::f64::consts::PI]).unwrap();
        assert!(distance_to_diagonal(&pair) < 1e-14);
    }

    #[test]
    fn bare_cusp_has_rank_drop() {
        let f = cusp_curve();
        let rep = immersion_check_map(&Bare(&f), &ImmersionOptions::default()).unwrap();
        assert_eq!(rep.verdict, ImmersionVerdict::RankDrop);
        assert!(rep.sigma_min < 1e-8);
        assert!(rep.witness[0].abs() < f.domain().axes()[0].spacing(4096));
    }

    #[test]
    fn bare_figure_eight_collides() {
        let f = figure_eight();
        let rep = injectivity_check_map(&Bare(&f), &InjectivityOptions::default()).unwrap();
        assert_eq!(rep.verdict, InjectivityVerdict::Collision);
        assert!(rep.image_gap < 1e-9);
        assert!(rep.separation >= rep.delta);
    }

    #[test]
    fn exclusion_radius_larger_than_domain_is_an_error() {
        let f = cusp_curve();
        let opts = InjectivityOptions {
            delta: 3.0,
            ..Default::default()
        };
        assert!(matches!(
            injectivity_check_map(&Bare(&f), &opts),
            Err(GdsError::ExclusionTooLarge { .. })
        ));
    }

    #[test]
    fn separation_is_enforced() {
        let f = trefoil();
        let (mut a, mut b) = (vec![1.0], vec![1.001]);
        enforce_separation(&f, &mut a, &mut b, 0.01);
        assert!(f.domain().separation(&a, &b) >= 0.01);
        let f = cusp_curve();
        let (mut a, mut b) = (vec![1.0], vec![0.999]);
        enforce_separation(&f, &mut a, &mut b, 0.01);
        assert!(f.domain().separation(&a, &b) >= 0.01);
    }
}
