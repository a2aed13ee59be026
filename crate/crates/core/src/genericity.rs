//! Monte Carlo experiments over the central points with `A` and `f` fixed,
//! and explicit constructions of central points in the bad set.
//!
//! Every trial draws from its own ChaCha stream keyed by `(seed, trial)`, so
//! summaries are identical regardless of how trials are scheduled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{
    immersion_check, injectivity_check, ImmersionOptions, ImmersionVerdict, InjectivityOptions,
    InjectivityVerdict,
};
use crate::error::{GdsError, Result};
use crate::linalg;
use crate::manifolds::ParamManifold;
use crate::maps::{CentralPoints, CoefficientMatrix, GdsMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Distribution {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for Distribution {
    fn default() -> Self {
        Distribution::Gaussian { mean: 0.0, std: 1.0 }
    }
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Gaussian { mean, std } => {
                if !(mean.is_finite() && std > 0.0 && std.is_finite()) {
                    return Err(GdsError::Distribution(format!(
                        "gaussian needs finite mean and std > 0, got mean = {mean}, std = {std}"
                    )));
                }
            }
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(GdsError::Distribution(format!(
                        "uniform needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Gaussian { mean, std } => mean + std * rng.sample::<f64, _>(StandardNormal),
            Distribution::Uniform { lo, hi } => rng.random_range(lo..hi),
        }
    }
}

/// Independent RNG stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `m` independent points of `R^m` from `dist`.
pub fn sample_central_points<R: Rng + ?Sized>(
    m: usize,
    dist: &Distribution,
    rng: &mut R,
) -> Result<CentralPoints> {
    dist.validate()?;
    if m == 0 {
        return Err(GdsError::InvalidArgument("m must be positive".into()));
    }
    let points = (0..m)
        .map(|_| (0..m).map(|_| dist.draw(rng)).collect())
        .collect();
    CentralPoints::new(points)
}

/// Random `m x m` coefficients with magnitudes in `[0.5, 2)` and random
/// signs, bounded away from zero.
pub fn sample_coefficients<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<CoefficientMatrix> {
    let rows = (0..m)
        .map(|_| {
            (0..m)
                .map(|_| {
                    let mag: f64 = rng.random_range(0.5..2.0);
                    if rng.random_bool(0.5) {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect()
        })
        .collect();
    CoefficientMatrix::new(rows)
}

/// Random equidimensional map: [`sample_coefficients`] and standard Gaussian
/// central points.
pub fn sample_map<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Result<GdsMap> {
    let a = sample_coefficients(m, rng)?;
    let p = sample_central_points(m, &Distribution::default(), rng)?;
    GdsMap::new(a, p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theorem {
    Immersion,
    Injectivity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrialVerdict {
    Pass,
    Fail,
    Inconclusive,
}

impl TrialVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialVerdict::Pass => "pass",
            TrialVerdict::Fail => "fail",
            TrialVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q01: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Quantiles {
    /// Nearest-rank quantiles.
    pub fn of(values: &[f64]) -> Option<Quantiles> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |q: f64| {
            let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
            v[idx]
        };
        Some(Quantiles {
            min: v[0],
            q01: at(0.01),
            q05: at(0.05),
            q25: at(0.25),
            median: at(0.5),
            q75: at(0.75),
            q95: at(0.95),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub theorem: Theorem,
    pub manifold: String,
    pub n: usize,
    pub m: usize,
    pub coefficients: Vec<Vec<f64>>,
    pub trials: usize,
    pub seed: u64,
    pub distribution: Distribution,
    pub hypothesis_holds: bool,
    /// sigma_min (immersion) or minimum image gap (injectivity) per trial.
    pub margins: Vec<f64>,
    pub verdicts: Vec<TrialVerdict>,
    pub failures: usize,
    pub passes: usize,
    pub inconclusive: usize,
    pub quantiles: Option<Quantiles>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloOptions {
    pub trials: usize,
    pub seed: u64,
    pub distribution: Distribution,
    /// Run even when the dimension hypothesis of the theorem fails.
    pub allow_hypothesis_violation: bool,
    pub immersion: ImmersionOptions,
    pub injectivity: InjectivityOptions,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        MonteCarloOptions {
            trials: 1000,
            seed: 42,
            distribution: Distribution::default(),
            allow_hypothesis_violation: false,
            immersion: ImmersionOptions::default(),
            injectivity: InjectivityOptions::default(),
        }
    }
}

fn check_setup(
    f: &ParamManifold,
    a: &CoefficientMatrix,
    theorem: Theorem,
    allow_violation: bool,
) -> Result<bool> {
    let (n, m) = (f.source_dim(), f.ambient_dim());
    if a.rows() != m || a.cols() != m {
        return Err(GdsError::Dimension {
            expected: m,
            found: if a.cols() != m { a.cols() } else { a.rows() },
        });
    }
    let (holds, statement) = match theorem {
        Theorem::Immersion => (m >= 2 * n, format!("immersion needs m >= 2n, got m = {m}, n = {n}")),
        Theorem::Injectivity => (
            m > 2 * n,
            format!("injectivity needs m >= 2n + 1, got m = {m}, n = {n}"),
        ),
    };
    if !holds && !allow_violation {
        return Err(GdsError::Hypothesis(statement));
    }
    Ok(holds)
}

fn run_trials(
    f: &ParamManifold,
    a: &CoefficientMatrix,
    theorem: Theorem,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloSummary> {
    opts.distribution.validate()?;
    let holds = check_setup(f, a, theorem, opts.allow_hypothesis_violation)?;
    let m = f.ambient_dim();
    let outcomes: Vec<(f64, TrialVerdict)> = (0..opts.trials as u64)
        .into_par_iter()
        .map(|trial| -> Result<(f64, TrialVerdict)> {
            let mut rng = trial_rng(opts.seed, trial);
            let p = sample_central_points(m, &opts.distribution, &mut rng)?;
            let g = GdsMap::new(a.clone(), p)?;
            Ok(match theorem {
                Theorem::Immersion => {
                    let r = immersion_check(&g, f, &opts.immersion)?;
                    let v = match r.verdict {
                        ImmersionVerdict::Immersion => TrialVerdict::Pass,
                        ImmersionVerdict::RankDrop => TrialVerdict::Fail,
                        ImmersionVerdict::Inconclusive => TrialVerdict::Inconclusive,
                    };
                    (r.sigma_min, v)
                }
                Theorem::Injectivity => {
                    let r = injectivity_check(&g, f, &opts.injectivity)?;
                    let v = match r.verdict {
                        InjectivityVerdict::Injective => TrialVerdict::Pass,
                        InjectivityVerdict::Collision => TrialVerdict::Fail,
                        InjectivityVerdict::Inconclusive => TrialVerdict::Inconclusive,
                    };
                    (r.image_gap, v)
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let margins: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let verdicts: Vec<TrialVerdict> = outcomes.iter().map(|o| o.1).collect();
    let count = |v: TrialVerdict| verdicts.iter().filter(|&&x| x == v).count();
    Ok(MonteCarloSummary {
        theorem,
        manifold: f.name().to_string(),
        n: f.source_dim(),
        m,
        coefficients: a.to_rows(),
        trials: opts.trials,
        seed: opts.seed,
        distribution: opts.distribution,
        hypothesis_holds: holds,
        failures: count(TrialVerdict::Fail),
        passes: count(TrialVerdict::Pass),
        inconclusive: count(TrialVerdict::Inconclusive),
        quantiles: Quantiles::of(&margins),
        margins,
        verdicts,
    })
}

/// Samples `p`, runs the immersion check on `G_(p,A) o f`, records margins.
pub fn mc_genericity_immersion(
    f: &ParamManifold,
    a: &CoefficientMatrix,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloSummary> {
    run_trials(f, a, Theorem::Immersion, opts)
}

/// Samples `p`, runs the injectivity check on `G_(p,A) o f`, records margins.
pub fn mc_genericity_injectivity(
    f: &ParamManifold,
    a: &CoefficientMatrix,
    opts: &MonteCarloOptions,
) -> Result<MonteCarloSummary> {
    run_trials(f, a, Theorem::Injectivity, opts)
}

/// `p_i = f(q0)` for every `i`: each factor `f_j(q0) - p_ij` vanishes, so the
/// Jacobian of `G o f` at `q0` is zero for any coefficient matrix.
pub fn construct_bad_p_immersion(f: &ParamManifold, q0: &[f64]) -> Result<CentralPoints> {
    let x = f.eval(q0)?;
    CentralPoints::repeated(&x, f.ambient_dim())
}

fn distinct_images(f: &ParamManifold, q1: &[f64], q2: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let u = f.eval(q1)?;
    let v = f.eval(q2)?;
    let size = 1.0 + linalg::norm(&u).max(linalg::norm(&v));
    if linalg::distance(&u, &v) <= 1e-12 * size {
        return Err(GdsError::CoincidentImages(format!(
            "f({q1:?}) = f({q2:?}); f is already non-injective there"
        )));
    }
    Ok((u, v))
}

/// `p_ij = (f_j(q1) + f_j(q2)) / 2`: then `(u_j - p_ij)^2 = (v_j - p_ij)^2`
/// coordinatewise and `G o f` identifies `q1` and `q2` for any `A`.
pub fn construct_bad_p_injectivity(f: &ParamManifold, q1: &[f64], q2: &[f64]) -> Result<CentralPoints> {
    let (u, v) = distinct_images(f, q1, q2)?;
    let mid: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 0.5 * (a + b)).collect();
    CentralPoints::repeated(&mid, f.ambient_dim())
}

/// Minimum-norm solution of the per-row collision equations
/// `sum_j a_ij (u_j - v_j) p_ij = sum_j a_ij (u_j^2 - v_j^2) / 2`.
pub fn construct_bad_p_injectivity_min_norm(
    f: &ParamManifold,
    a: &CoefficientMatrix,
    q1: &[f64],
    q2: &[f64],
) -> Result<CentralPoints> {
    let (u, v) = distinct_images(f, q1, q2)?;
    let m = f.ambient_dim();
    if a.rows() != m || a.cols() != m {
        return Err(GdsError::Dimension {
            expected: m,
            found: a.cols(),
        });
    }
    let points = (0..m)
        .map(|i| {
            let w: Vec<f64> = (0..m).map(|j| a.get(i, j) * (u[j] - v[j])).collect();
            let rhs: f64 = (0..m)
                .map(|j| 0.5 * a.get(i, j) * (u[j] * u[j] - v[j] * v[j]))
                .sum();
            let w2: f64 = w.iter().map(|x| x * x).sum();
            w.iter().map(|x| x * rhs / w2).collect()
        })
        .collect();
    CentralPoints::new(points)
}

/// Adds independent `N(0, sigma^2)` noise to every coordinate.
pub fn perturb_central_points<R: Rng + ?Sized>(
    p: &CentralPoints,
    sigma: f64,
    rng: &mut R,
) -> Result<CentralPoints> {
    let points = p
        .points()
        .iter()
        .map(|pt| {
            pt.iter()
                .map(|v| v + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    CentralPoints::new(points)
}
