//! The `gdsq` command-line front end.
//!
//! Every subcommand writes a JSON report (to `--json` or stdout), optional
//! CSV/SVG artifacts, and exits with 0 (pass or complete), 1 (usage or
//! configuration error), 2 (check failed) or 3 (inconclusive).

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::composition::{
    compose_eval, composition_jacobian, composition_jacobian_ad, immersion_check,
    injective_immersion_check, injectivity_check, CollisionReport, EmbeddingReport,
    EmbeddingVerdict, ImmersionOptions, ImmersionVerdict, InjectivityOptions, InjectivityVerdict,
    RankReport,
};
use crate::genericity::{
    construct_bad_p_immersion, construct_bad_p_injectivity, mc_genericity_immersion,
    mc_genericity_injectivity, perturb_central_points, sample_coefficients, sample_map, trial_rng,
    MonteCarloOptions, MonteCarloSummary, Theorem,
};
use crate::linalg;
use crate::maps::{CoefficientMatrix, GdsMap};
use crate::manifolds::ParamManifold;
use crate::singularity::{
    classify_singular_point, find_collision, project_to_singular_set, trace_singular_curve,
    verify_lemma_singular, CollisionOptions, CollisionPair, PointClass, SingularCurve,
    SingularLemmaReport, TraceOptions, Window,
};
use crate::tolerances::Tolerances;

use config::{
    BadKind, ConfigError, ExperimentConfig, ManifoldDescriptor, MapDescriptor, DEFAULT_Q,
    DEFAULT_Q_PAIR, DEFAULT_WINDOW,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gdsq", version, about = "Generalized distance-squared mapping laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Inline map descriptor, e.g. '{"kind":"distance-squared","p":[[0,0],[1,0]]}'.
    #[arg(long, global = true)]
    pub map: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    pub json: Option<PathBuf>,
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[arg(long, global = true)]
    pub svg: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ManifoldArg {
    /// Specimen name (circle, circle3, trefoil, figure-eight, cusp, torus,
    /// torus5) or an inline manifold descriptor.
    #[arg(long)]
    pub manifold: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Per-axis grid resolution, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct InjArgs {
    /// Exclusion radius around the diagonal.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TheoremArg {
    Immersion,
    Injectivity,
}

impl From<TheoremArg> for Theorem {
    fn from(t: TheoremArg) -> Self {
        match t {
            TheoremArg::Immersion => Theorem::Immersion,
            TheoremArg::Injectivity => Theorem::Injectivity,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate G at a point.
    Eval {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Jacobian of G at a point, closed form against automatic differentiation.
    Jacobian {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Jacobian of G o f at a parameter.
    ComposeJacobian {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        #[command(flatten)]
        manifold: ManifoldArg,
        #[command(flatten)]
        common: Common,
    },
    /// Is G o f an immersion?
    CheckImmersion {
        #[command(flatten)]
        manifold: ManifoldArg,
        #[command(flatten)]
        grid: GridArgs,
        /// Refinement rounds around the worst cells.
        #[arg(long)]
        refine: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Is G o f injective?
    CheckInjectivity {
        #[command(flatten)]
        manifold: ManifoldArg,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        inj: InjArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Both checks; an embedding candidate needs both to pass.
    CheckEmbedding {
        #[command(flatten)]
        manifold: ManifoldArg,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        refine: Option<usize>,
        #[command(flatten)]
        inj: InjArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Trace and classify the singular set of a planar map.
    SingularSet {
        /// lo1,lo2,hi1,hi2
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        window: Option<Vec<f64>>,
        #[arg(long)]
        step: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Classify the singular point nearest to x as fold or cusp.
    Classify {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Rank drop at every central point and an explicit collision.
    VerifyLemmas {
        /// Dimension of the random map when no map is configured.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        attempts: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo over the central points with A and f fixed.
    Mc {
        #[arg(long, value_enum)]
        theorem: Option<TheoremArg>,
        #[command(flatten)]
        manifold: ManifoldArg,
        #[arg(long)]
        trials: Option<usize>,
        /// Run even when the dimension hypothesis fails.
        #[arg(long)]
        allow_hypothesis_violation: bool,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        inj: InjArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Construct central points in the bad set and confirm the defect.
    BadP {
        #[arg(long, value_enum)]
        theorem: Option<TheoremArg>,
        #[command(flatten)]
        manifold: ManifoldArg,
        /// Parameter q0 (immersion) or q1 (injectivity).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q: Option<Vec<f64>>,
        /// Second parameter q2 for the injectivity construction.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        q2: Option<Vec<f64>>,
        /// Perturb the constructed points by N(0, sigma^2); the check is then
        /// expected to pass.
        #[arg(long)]
        perturb: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

/// Wrapper written for every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifold: Option<String>,
    pub report: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub x: Vec<f64>,
    pub value: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianReport {
    pub x: Vec<f64>,
    pub closed_form: Vec<Vec<f64>>,
    pub automatic: Vec<Vec<f64>>,
    pub max_difference: f64,
    pub rank: usize,
    pub determinant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposeJacobianReport {
    pub q: Vec<f64>,
    pub value: Vec<f64>,
    pub jacobian: Vec<Vec<f64>>,
    pub automatic: Vec<Vec<f64>>,
    pub max_difference: f64,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub x: Vec<f64>,
    pub singular_point: [f64; 2],
    pub determinant: f64,
    pub class: PointClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub m: usize,
    pub seed: u64,
    pub singular: SingularLemmaReport,
    pub collision: Option<CollisionPair>,
    pub collision_error: Option<String>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadPReport {
    pub theorem: Theorem,
    pub q: Vec<f64>,
    pub q2: Option<Vec<f64>>,
    pub central_points: Vec<Vec<f64>>,
    pub perturbation: Option<f64>,
    /// True when the defect should be visible (no perturbation).
    pub defect_expected: bool,
    pub immersion: Option<RankReport>,
    pub injectivity: Option<CollisionReport>,
    pub confirmed: bool,
}

/// Everything a subcommand produced.
pub struct Artifacts {
    pub json: String,
    pub csv: Option<String>,
    pub svg: Option<String>,
    pub exit_code: i32,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gds(#[from] crate::GdsError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args`, runs the command, writes artifacts, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_USAGE,
            };
        }
    };
    configure_threads();
    match execute(&cli.command) {
        Ok(artifacts) => match emit(&cli.command, &artifacts) {
            Ok(()) => artifacts.exit_code,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("GDSQ_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                // Fails harmlessly if the pool already exists.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => log::warn!("ignoring GDSQ_THREADS={v:?}"),
        }
    }
}

fn common_of(cmd: &Command) -> &Common {
    match cmd {
        Command::Eval { common, .. }
        | Command::Jacobian { common, .. }
        | Command::ComposeJacobian { common, .. }
        | Command::CheckImmersion { common, .. }
        | Command::CheckInjectivity { common, .. }
        | Command::CheckEmbedding { common, .. }
        | Command::SingularSet { common, .. }
        | Command::Classify { common, .. }
        | Command::VerifyLemmas { common, .. }
        | Command::Mc { common, .. }
        | Command::BadP { common, .. } => common,
    }
}

fn emit(cmd: &Command, art: &Artifacts) -> CliResult<()> {
    let common = common_of(cmd);
    let cfg = load_config(common)?;
    let write = |path: &PathBuf, text: &str| {
        output::write_file(path, text).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        })
    };
    match common.json.as_ref().or(cfg.outputs.json.as_ref()) {
        Some(path) => write(path, &art.json)?,
        None => print!("{}", art.json),
    }
    if let (Some(path), Some(csv)) = (common.csv.as_ref().or(cfg.outputs.csv.as_ref()), &art.csv) {
        write(path, csv)?;
    }
    if let (Some(path), Some(svg)) = (common.svg.as_ref().or(cfg.outputs.svg.as_ref()), &art.svg) {
        write(path, svg)?;
    }
    Ok(())
}

fn load_config(common: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(text) = &common.map {
        let de = &mut serde_json::Deserializer::from_str(text);
        let map: MapDescriptor = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = format!("--map.{}", e.path());
            ConfigError::field(path, e.into_inner())
        })?;
        cfg.map = Some(map);
        cfg.validate()?;
    }
    Ok(cfg)
}

fn resolve_manifold(arg: &ManifoldArg, cfg: &ExperimentConfig) -> CliResult<(ParamManifold, String)> {
    let desc = match &arg.manifold {
        Some(text) if text.trim_start().starts_with('{') => {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize::<_, ManifoldDescriptor>(de).map_err(|e| {
                ConfigError::field(format!("--manifold.{}", e.path()), e.into_inner())
            })?
        }
        Some(name) => ManifoldDescriptor::named(name)?,
        None => cfg
            .manifold
            .clone()
            .ok_or_else(|| CliError::Usage("no manifold: pass --manifold or set `manifold` in the config".into()))?,
    };
    let f = desc.build()?;
    let name = f.name().to_string();
    Ok((f, name))
}

fn resolve_map(cfg: &ExperimentConfig, seed: u64, m_hint: Option<usize>) -> CliResult<(GdsMap, MapDescriptor)> {
    let desc = cfg
        .map
        .as_ref()
        .ok_or_else(|| CliError::Usage("no map: pass --map or set `map` in the config".into()))?;
    let g = desc.build(seed, m_hint)?;
    Ok((g.clone(), echo_map(&g)))
}

fn echo_map(g: &GdsMap) -> MapDescriptor {
    MapDescriptor {
        a: Some(g.coefficients().to_rows()),
        p: Some(g.central_points().to_rows()),
        ..Default::default()
    }
}

fn tolerances(cfg: &ExperimentConfig) -> Tolerances {
    cfg.options.tolerances.unwrap_or_default()
}

fn require_point(flag: Option<&Vec<f64>>, cfg: Option<&Vec<f64>>, name: &str) -> CliResult<Vec<f64>> {
    flag.or(cfg)
        .cloned()
        .ok_or_else(|| CliError::Usage(format!("missing --{name}")))
}

fn immersion_options(grid: &GridArgs, refine: Option<usize>, cfg: &ExperimentConfig) -> ImmersionOptions {
    let d = ImmersionOptions::default();
    ImmersionOptions {
        grid: grid.grid.clone().or_else(|| cfg.options.grid.clone()),
        refine_rounds: refine.or(cfg.options.refine_rounds).unwrap_or(d.refine_rounds),
        tolerances: tolerances(cfg),
    }
}

fn injectivity_options(grid: &GridArgs, inj: &InjArgs, cfg: &ExperimentConfig) -> CliResult<InjectivityOptions> {
    let d = InjectivityOptions::default();
    let delta = inj.delta.or(cfg.options.delta).unwrap_or(d.delta);
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(CliError::Usage(format!("--delta must be positive, got {delta}")));
    }
    Ok(InjectivityOptions {
        grid: grid.grid.clone().or_else(|| cfg.options.grid.clone()),
        delta,
        starts: inj.starts.or(cfg.options.starts).unwrap_or(d.starts),
        max_iterations: cfg.options.max_iterations.unwrap_or(d.max_iterations),
        tolerances: tolerances(cfg),
    })
}

fn immersion_exit(v: ImmersionVerdict) -> (i32, &'static str) {
    match v {
        ImmersionVerdict::Immersion => (EXIT_PASS, "immersion"),
        ImmersionVerdict::RankDrop => (EXIT_FAIL, "rank-drop"),
        ImmersionVerdict::Inconclusive => (EXIT_INCONCLUSIVE, "inconclusive"),
    }
}

fn injectivity_exit(v: InjectivityVerdict) -> (i32, &'static str) {
    match v {
        InjectivityVerdict::Injective => (EXIT_PASS, "injective"),
        InjectivityVerdict::Collision => (EXIT_FAIL, "collision"),
        InjectivityVerdict::Inconclusive => (EXIT_INCONCLUSIVE, "inconclusive"),
    }
}

fn envelope<T: Serialize>(
    command: &str,
    (exit_code, status): (i32, &str),
    map: Option<MapDescriptor>,
    manifold: Option<String>,
    report: T,
) -> CliResult<(String, i32)> {
    let env = Envelope {
        command: command.to_string(),
        status: status.to_string(),
        exit_code,
        map,
        manifold,
        report,
    };
    Ok((output::to_json_string(&env)?, exit_code))
}

/// Runs a command without touching the filesystem (apart from reading the
/// config) and returns its artifacts.
pub fn execute(cmd: &Command) -> CliResult<Artifacts> {
    let common = common_of(cmd);
    let cfg = load_config(common)?;
    let seed = common.seed.or(cfg.options.seed);
    let mut csv = None;
    let mut svg = None;
    let (json, exit_code) = match cmd {
        Command::Eval { x, .. } => {
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), None)?;
            let x = require_point(x.as_ref(), cfg.options.x.as_ref(), "x")?;
            let value = g.eval(&x)?;
            envelope("eval", (EXIT_PASS, "complete"), Some(echo), None, EvalReport { x, value })?
        }
        Command::Jacobian { x, .. } => {
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), None)?;
            let x = require_point(x.as_ref(), cfg.options.x.as_ref(), "x")?;
            let jc = g.jacobian_closed_form(&x)?;
            let ja = g.jacobian_ad(&x)?;
            let report = JacobianReport {
                max_difference: linalg::max_abs(&(&jc - &ja)),
                rank: linalg::numerical_rank(&jc, tolerances(&cfg).matrix_rank),
                determinant: if g.is_equidimensional() { Some(g.det_jacobian(&x)?) } else { None },
                closed_form: linalg::to_rows(&jc),
                automatic: linalg::to_rows(&ja),
                x,
            };
            envelope("jacobian", (EXIT_PASS, "complete"), Some(echo), None, report)?
        }
        Command::ComposeJacobian { q, manifold, .. } => {
            let (f, name) = resolve_manifold(manifold, &cfg)?;
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), Some(f.ambient_dim()))?;
            let q = require_point(q.as_ref(), cfg.options.q.as_ref(), "q")?;
            let j = composition_jacobian(&g, &f, &q)?;
            let ja = composition_jacobian_ad(&g, &f, &q)?;
            let report = ComposeJacobianReport {
                value: compose_eval(&g, &f, &q)?,
                max_difference: linalg::max_abs(&(&j - &ja)),
                rank: linalg::numerical_rank(&j, tolerances(&cfg).matrix_rank),
                jacobian: linalg::to_rows(&j),
                automatic: linalg::to_rows(&ja),
                q,
            };
            envelope("compose-jacobian", (EXIT_PASS, "complete"), Some(echo), Some(name), report)?
        }
        Command::CheckImmersion {
            manifold, grid, refine, ..
        } => {
            let (f, name) = resolve_manifold(manifold, &cfg)?;
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), Some(f.ambient_dim()))?;
            let report = immersion_check(&g, &f, &immersion_options(grid, *refine, &cfg))?;
            csv = Some(output::sigma_grid_csv(&report));
            envelope("check-immersion", immersion_exit(report.verdict), Some(echo), Some(name), report)?
        }
        Command::CheckInjectivity { manifold, grid, inj, .. } => {
            let (f, name) = resolve_manifold(manifold, &cfg)?;
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), Some(f.ambient_dim()))?;
            let report = injectivity_check(&g, &f, &injectivity_options(grid, inj, &cfg)?)?;
            envelope("check-injectivity", injectivity_exit(report.verdict), Some(echo), Some(name), report)?
        }
        Command::CheckEmbedding {
            manifold,
            grid,
            refine,
            inj,
            ..
        } => {
            let (f, name) = resolve_manifold(manifold, &cfg)?;
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), Some(f.ambient_dim()))?;
            let report: EmbeddingReport = injective_immersion_check(
                &g,
                &f,
                &immersion_options(grid, *refine, &cfg),
                &injectivity_options(grid, inj, &cfg)?,
            )?;
            csv = Some(output::sigma_grid_csv(&report.immersion));
            let status = match report.verdict {
                EmbeddingVerdict::EmbeddingCandidate => (EXIT_PASS, "embedding-candidate"),
                EmbeddingVerdict::NotEmbedding => (EXIT_FAIL, "not-embedding"),
                EmbeddingVerdict::Inconclusive => (EXIT_INCONCLUSIVE, "inconclusive"),
            };
            envelope("check-embedding", status, Some(echo), Some(name), report)?
        }
        Command::SingularSet { window, step, .. } => {
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), Some(2))?;
            let window = match window {
                Some(w) if w.len() == 4 => Window::new([w[0], w[1]], [w[2], w[3]])?,
                Some(w) => {
                    return Err(CliError::Usage(format!(
                        "--window takes lo1,lo2,hi1,hi2; got {} values",
                        w.len()
                    )))
                }
                None => {
                    let w = cfg.options.window.clone().unwrap_or(DEFAULT_WINDOW);
                    Window::new(w.lo, w.hi)?
                }
            };
            let d = TraceOptions::default();
            let opts = TraceOptions {
                step: step.or(cfg.options.step).unwrap_or(d.step),
                seed_grid: cfg.options.seed_grid.unwrap_or(d.seed_grid),
                tolerances: tolerances(&cfg),
            };
            if !(opts.step > 0.0 && opts.step.is_finite()) {
                return Err(CliError::Usage(format!("--step must be positive, got {}", opts.step)));
            }
            let curve: SingularCurve = trace_singular_curve(&g, &window, &opts)?;
            csv = Some(output::singular_curve_csv(&curve));
            svg = Some(output::singular_curve_svg(&curve));
            let status = if curve.unresolved_count > 0 {
                (EXIT_INCONCLUSIVE, "unresolved-points")
            } else {
                (EXIT_PASS, "complete")
            };
            envelope("singular-set", status, Some(echo), None, curve)?
        }
        Command::Classify { x, .. } => {
            let (g, echo) = resolve_map(&cfg, seed.unwrap_or(0), Some(2))?;
            let x = require_point(x.as_ref(), cfg.options.x.as_ref(), "x")?;
            let y = project_to_singular_set(&g, &x)?;
            let class = classify_singular_point(&g, &y, &tolerances(&cfg))?;
            let status = match class {
                PointClass::Unresolved => (EXIT_INCONCLUSIVE, class.as_str()),
                _ => (EXIT_PASS, class.as_str()),
            };
            let report = ClassifyReport {
                determinant: g.det_jacobian(&y)?,
                singular_point: y,
                class,
                x,
            };
            envelope("classify", status, Some(echo), None, report)?
        }
        Command::VerifyLemmas { m, attempts, .. } => {
            let seed = seed.unwrap_or(0);
            let g = match &cfg.map {
                Some(desc) => desc.build(seed, *m)?,
                None => sample_map(m.unwrap_or(3), &mut trial_rng(seed, 0))?,
            };
            let singular = verify_lemma_singular(&g, tolerances(&cfg).matrix_rank)?;
            let copts = CollisionOptions {
                attempts: attempts
                    .or(cfg.options.attempts)
                    .unwrap_or(CollisionOptions::default().attempts),
                seed,
                ..Default::default()
            };
            let (collision, collision_error) = match find_collision(&g, &copts) {
                Ok(c) => (Some(c), None),
                Err(e @ crate::GdsError::CollisionNotFound { .. }) => (None, Some(e.to_string())),
                Err(e) => return Err(e.into()),
            };
            let pass = singular.all_pass && collision.is_some();
            let report = LemmaReport {
                m: g.dim(),
                seed,
                singular,
                collision,
                collision_error,
                pass,
            };
            let status = if pass { (EXIT_PASS, "verified") } else { (EXIT_FAIL, "not-verified") };
            envelope("verify-lemmas", status, Some(echo_map(&g)), None, report)?
        }
        Command::Mc {
            theorem,
            manifold,
            trials,
            allow_hypothesis_violation,
            grid,
            inj,
            ..
        } => {
            let theorem: Theorem = theorem
                .map(Theorem::from)
                .or(cfg.options.theorem)
                .ok_or_else(|| CliError::Usage("missing --theorem".into()))?;
            let (f, name) = resolve_manifold(manifold, &cfg)?;
            let m = f.ambient_dim();
            let a = match &cfg.map {
                Some(desc) => desc.coefficients(m)?,
                None => CoefficientMatrix::ones(m, m),
            };
            let d = MonteCarloOptions::default();
            let opts = MonteCarloOptions {
                trials: trials.or(cfg.options.trials).unwrap_or(d.trials),
                seed: seed.unwrap_or(d.seed),
                distribution: cfg.options.distribution.unwrap_or(d.distribution),
                allow_hypothesis_violation: *allow_hypothesis_violation
                    || cfg.options.allow_hypothesis_violation.unwrap_or(false),
                immersion: immersion_options(grid, None, &cfg),
                injectivity: injectivity_options(grid, inj, &cfg)?,
            };
            let summary: MonteCarloSummary = match theorem {
                Theorem::Immersion => mc_genericity_immersion(&f, &a, &opts)?,
                Theorem::Injectivity => mc_genericity_injectivity(&f, &a, &opts)?,
            };
            csv = Some(output::monte_carlo_csv(&summary));
            svg = Some(output::margin_histogram_svg(&summary, 40));
            let status = if summary.hypothesis_holds && summary.failures > 0 {
                (EXIT_FAIL, "failures")
            } else {
                (EXIT_PASS, "complete")
            };
            envelope("mc", status, None, Some(name), summary)?
        }
        Command::BadP {
            theorem,
            manifold,
            q,
            q2,
            perturb,
            ..
        } => {
            let seed = seed.unwrap_or(0);
            let theorem: Theorem = theorem
                .map(Theorem::from)
                .or(cfg.options.theorem)
                .or(cfg.options.bad_kind.map(|k| match k {
                    BadKind::Immersion => Theorem::Immersion,
                    BadKind::Injectivity => Theorem::Injectivity,
                }))
                .ok_or_else(|| CliError::Usage("missing --theorem".into()))?;
            let (f, name) = resolve_manifold(manifold, &cfg)?;
            let m = f.ambient_dim();
            let n = f.source_dim();
            let a = match &cfg.map {
                Some(desc) => desc.coefficients(m)?,
                None => sample_coefficients(m, &mut trial_rng(seed, 0))?,
            };
            let q = q
                .clone()
                .or_else(|| cfg.options.q.clone())
                .or_else(|| cfg.options.q1.clone())
                .unwrap_or_else(|| match theorem {
                    Theorem::Immersion => vec![DEFAULT_Q; n],
                    Theorem::Injectivity => vec![DEFAULT_Q_PAIR.0; n],
                });
            let (p, q2) = match theorem {
                Theorem::Immersion => (construct_bad_p_immersion(&f, &q)?, None),
                Theorem::Injectivity => {
                    let q2 = q2
                        .clone()
                        .or_else(|| cfg.options.q2.clone())
                        .unwrap_or_else(|| vec![DEFAULT_Q_PAIR.1; n]);
                    (construct_bad_p_injectivity(&f, &q, &q2)?, Some(q2))
                }
            };
            let p = match perturb {
                Some(sigma) if !(*sigma >= 0.0 && sigma.is_finite()) => {
                    return Err(CliError::Usage(format!("--perturb must be nonnegative, got {sigma}")))
                }
                Some(sigma) => perturb_central_points(&p, *sigma, &mut trial_rng(seed, 1))?,
                None => p,
            };
            let g = GdsMap::new(a, p)?;
            let defect_expected = perturb.is_none();
            let grid = GridArgs::default();
            let (immersion, injectivity, status) = match theorem {
                Theorem::Immersion => {
                    let r = immersion_check(&g, &f, &immersion_options(&grid, None, &cfg))?;
                    let s = immersion_exit(r.verdict);
                    (Some(r), None, s)
                }
                Theorem::Injectivity => {
                    let r = injectivity_check(&g, &f, &injectivity_options(&grid, &InjArgs::default(), &cfg)?)?;
                    let s = injectivity_exit(r.verdict);
                    (None, Some(r), s)
                }
            };
            // Without perturbation the defect is the expected outcome.
            let (exit, confirmed) = match (status.0, defect_expected) {
                (EXIT_INCONCLUSIVE, _) => (EXIT_INCONCLUSIVE, false),
                (EXIT_FAIL, true) => (EXIT_PASS, true),
                (_, true) => (EXIT_FAIL, false),
                (code, false) => (code, code == EXIT_PASS),
            };
            let report = BadPReport {
                theorem,
                q,
                q2,
                central_points: g.central_points().to_rows(),
                perturbation: *perturb,
                defect_expected,
                immersion,
                injectivity,
                confirmed,
            };
            let label = if confirmed { "confirmed" } else { status.1 };
            envelope("bad-p", (exit, label), Some(echo_map(&g)), Some(name), report)?
        }
    };
    Ok(Artifacts {
        json,
        csv,
        svg,
        exit_code,
    })
}
