//! Python bindings: maps, manifolds, the composition checks, singular-set
//! analysis and Monte Carlo runs. Reports come back as `Report` objects
//! carrying the same JSON the command-line tool writes.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::Serialize;

use gdsq_core::cli::config::ManifoldDescriptor;
use gdsq_core::cli::output::to_json_string;
use gdsq_core::linalg::to_rows;
use gdsq_core::composition::{self, ImmersionOptions, InjectivityOptions};
use gdsq_core::genericity::{self, Distribution, MonteCarloOptions};
use gdsq_core::singularity::{self, CollisionOptions, TraceOptions, Window};
use gdsq_core::tolerances::Tolerances;
use gdsq_core::{CentralPoints, CoefficientMatrix, GdsError};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// JSON-backed result of an analysis.
#[pyclass(module = "gdsq", frozen)]
pub struct Report {
    kind: String,
    json: String,
    verdict: Option<String>,
}

impl Report {
    fn new<T: Serialize>(kind: &str, value: &T) -> PyResult<Self> {
        let json = to_json_string(value).map_err(err)?;
        let tree = serde_json::to_value(value).map_err(err)?;
        let verdict = tree
            .get("verdict")
            .or_else(|| tree.get("class"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        Ok(Report {
            kind: kind.to_string(),
            json,
            verdict,
        })
    }
}

#[pymethods]
impl Report {
    #[getter]
    fn kind(&self) -> &str {
        &self.kind
    }

    /// Overall verdict (or point class) when the report has one.
    #[getter]
    fn verdict(&self) -> Option<&str> {
        self.verdict.as_deref()
    }

    fn to_json(&self) -> &str {
        &self.json
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        py.import("json")?.call_method1("loads", (self.json.as_str(),))
    }

    fn __getitem__<'py>(&self, py: Python<'py>, key: &str) -> PyResult<Bound<'py, PyAny>> {
        self.to_dict(py)?.get_item(key)
    }

    fn __repr__(&self) -> String {
        match &self.verdict {
            Some(v) => format!("Report(kind={:?}, verdict={v:?})", self.kind),
            None => format!("Report(kind={:?})", self.kind),
        }
    }
}

/// `G(x)_i = sum_j a_ij (x_j - p_ij)^2`.
#[pyclass(module = "gdsq", name = "GdsMap", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyGdsMap {
    inner: gdsq_core::GdsMap,
}

#[pymethods]
impl PyGdsMap {
    #[new]
    #[pyo3(signature = (a, p))]
    fn new(a: Vec<Vec<f64>>, p: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyGdsMap {
            inner: gdsq_core::GdsMap::from_rows(a, p).map_err(err)?,
        })
    }

    #[staticmethod]
    fn distance_squared(p: Vec<Vec<f64>>) -> PyResult<Self> {
        let p = CentralPoints::new(p).map_err(err)?;
        Ok(PyGdsMap {
            inner: gdsq_core::distance_squared_map(p),
        })
    }

    #[staticmethod]
    fn lorentzian(p: Vec<Vec<f64>>) -> PyResult<Self> {
        let p = CentralPoints::new(p).map_err(err)?;
        Ok(PyGdsMap {
            inner: gdsq_core::lorentzian_map(p),
        })
    }

    /// Random nonzero coefficients and Gaussian central points.
    #[staticmethod]
    #[pyo3(signature = (m, seed = 0))]
    fn random(m: usize, seed: u64) -> PyResult<Self> {
        let g = genericity::sample_map(m, &mut genericity::trial_rng(seed, 0)).map_err(err)?;
        Ok(PyGdsMap { inner: g })
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        self.inner.coefficients().to_rows()
    }

    #[getter]
    fn p(&self) -> Vec<Vec<f64>> {
        self.inner.central_points().to_rows()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval(&x).map_err(err)
    }

    fn __call__(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.eval(x)
    }

    fn jacobian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.jacobian_closed_form(&x).map_err(err)?))
    }

    fn jacobian_ad(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.jacobian_ad(&x).map_err(err)?))
    }

    fn det_jacobian(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.det_jacobian(&x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("GdsMap(l={}, m={})", self.inner.rows(), self.inner.dim())
    }
}

/// A parametrized manifold `f: N -> R^m`.
#[pyclass(module = "gdsq", name = "Manifold", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyManifold {
    inner: gdsq_core::ParamManifold,
}

impl PyManifold {
    fn from_descriptor(d: ManifoldDescriptor) -> PyResult<Self> {
        Ok(PyManifold {
            inner: d.build().map_err(err)?,
        })
    }
}

#[pymethods]
impl PyManifold {
    /// From a manifold descriptor such as `{"kind": "torus", "m": 5}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let d: ManifoldDescriptor = serde_json::from_str(text).map_err(err)?;
        Self::from_descriptor(d)
    }

    #[staticmethod]
    #[pyo3(signature = (radius = 1.0, center = None, m = 2))]
    fn circle(radius: f64, center: Option<Vec<f64>>, m: usize) -> PyResult<Self> {
        Self::from_descriptor(ManifoldDescriptor::Circle { radius, center, m })
    }

    #[staticmethod]
    fn trefoil() -> PyResult<Self> {
        Self::from_descriptor(ManifoldDescriptor::Trefoil)
    }

    #[staticmethod]
    fn figure_eight() -> PyResult<Self> {
        Self::from_descriptor(ManifoldDescriptor::FigureEight)
    }

    #[staticmethod]
    fn cusp() -> PyResult<Self> {
        Self::from_descriptor(ManifoldDescriptor::Cusp)
    }

    #[staticmethod]
    #[pyo3(signature = (m = 4, big = 2.0, small = 1.0))]
    fn torus(m: usize, big: f64, small: f64) -> PyResult<Self> {
        Self::from_descriptor(ManifoldDescriptor::Torus { m, big, small })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn source_dim(&self) -> usize {
        self.inner.source_dim()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn eval(&self, q: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.eval(&q).map_err(err)
    }

    fn jacobian(&self, q: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.jacobian(&q).map_err(err)?))
    }

    fn __repr__(&self) -> String {
        format!(
            "Manifold({:?}, n={}, m={})",
            self.inner.name(),
            self.inner.source_dim(),
            self.inner.ambient_dim()
        )
    }
}

fn tolerances(t: Option<&str>) -> PyResult<Tolerances> {
    match t {
        None => Ok(Tolerances::default()),
        Some(text) => {
            let t: Tolerances = serde_json::from_str(text).map_err(err)?;
            t.validate().map_err(err)?;
            Ok(t)
        }
    }
}

/// Jacobian of `G o f` at `q`.
#[pyfunction]
fn compose_jacobian(g: &PyGdsMap, f: &PyManifold, q: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(to_rows(
        &composition::composition_jacobian(&g.inner, &f.inner, &q).map_err(err)?,
    ))
}

#[pyfunction]
#[pyo3(signature = (g, f, grid = None, refine_rounds = 40, tolerances_json = None))]
fn check_immersion(
    g: &PyGdsMap,
    f: &PyManifold,
    grid: Option<Vec<usize>>,
    refine_rounds: usize,
    tolerances_json: Option<&str>,
) -> PyResult<Report> {
    let opts = ImmersionOptions {
        grid,
        refine_rounds,
        tolerances: tolerances(tolerances_json)?,
    };
    let r = composition::immersion_check(&g.inner, &f.inner, &opts).map_err(err)?;
    Report::new("immersion", &r)
}

#[pyfunction]
#[pyo3(signature = (g, f, grid = None, delta = 1e-2, starts = 8, tolerances_json = None))]
fn check_injectivity(
    g: &PyGdsMap,
    f: &PyManifold,
    grid: Option<Vec<usize>>,
    delta: f64,
    starts: usize,
    tolerances_json: Option<&str>,
) -> PyResult<Report> {
    let opts = InjectivityOptions {
        grid,
        delta,
        starts,
        tolerances: tolerances(tolerances_json)?,
        ..Default::default()
    };
    let r = composition::injectivity_check(&g.inner, &f.inner, &opts).map_err(err)?;
    Report::new("injectivity", &r)
}

#[pyfunction]
fn check_embedding(g: &PyGdsMap, f: &PyManifold) -> PyResult<Report> {
    let r = composition::injective_immersion_check(
        &g.inner,
        &f.inner,
        &ImmersionOptions::default(),
        &InjectivityOptions::default(),
    )
    .map_err(err)?;
    Report::new("embedding", &r)
}

/// Rank drop of `JG` at every central point.
#[pyfunction]
fn verify_lemma_singular(g: &PyGdsMap) -> PyResult<Report> {
    let r = singularity::verify_lemma_singular(&g.inner, Tolerances::default().matrix_rank)
        .map_err(err)?;
    Report::new("lemma-singular", &r)
}

/// Two distinct points with the same image.
#[pyfunction]
#[pyo3(signature = (g, attempts = 64, seed = 0))]
fn find_collision(g: &PyGdsMap, attempts: usize, seed: u64) -> PyResult<Report> {
    let opts = CollisionOptions {
        attempts,
        seed,
        ..Default::default()
    };
    let r = singularity::find_collision(&g.inner, &opts).map_err(err)?;
    Report::new("collision", &r)
}

#[pyfunction]
#[pyo3(signature = (g, lo = (-4.0, -4.0), hi = (4.0, 4.0), step = 1e-2))]
fn trace_singular_curve(g: &PyGdsMap, lo: (f64, f64), hi: (f64, f64), step: f64) -> PyResult<Report> {
    let window = Window::new([lo.0, lo.1], [hi.0, hi.1]).map_err(err)?;
    let opts = TraceOptions {
        step,
        ..Default::default()
    };
    let r = singularity::trace_singular_curve(&g.inner, &window, &opts).map_err(err)?;
    Report::new("singular-curve", &r)
}

/// Fold or cusp at the singular point nearest to `x`.
#[pyfunction]
fn classify(g: &PyGdsMap, x: Vec<f64>) -> PyResult<(String, [f64; 2])> {
    let y = singularity::project_to_singular_set(&g.inner, &x).map_err(err)?;
    let c = singularity::classify_singular_point(&g.inner, &y, &Tolerances::default()).map_err(err)?;
    Ok((c.as_str().to_string(), y))
}

/// Monte Carlo over Gaussian central points with `A` (default all ones) and
/// `f` fixed. `theorem` is "immersion" or "injectivity".
#[pyfunction]
#[pyo3(signature = (theorem, f, a = None, trials = 100, seed = 42, std = 1.0))]
fn monte_carlo(
    theorem: &str,
    f: &PyManifold,
    a: Option<Vec<Vec<f64>>>,
    trials: usize,
    seed: u64,
    std: f64,
) -> PyResult<Report> {
    let m = f.inner.ambient_dim();
    let a = match a {
        Some(rows) => CoefficientMatrix::new(rows).map_err(err)?,
        None => CoefficientMatrix::ones(m, m),
    };
    let opts = MonteCarloOptions {
        trials,
        seed,
        distribution: Distribution::Gaussian { mean: 0.0, std },
        ..Default::default()
    };
    let summary = match theorem {
        "immersion" => genericity::mc_genericity_immersion(&f.inner, &a, &opts),
        "injectivity" => genericity::mc_genericity_injectivity(&f.inner, &a, &opts),
        other => {
            return Err(err(GdsError::InvalidArgument(format!(
                "theorem must be \"immersion\" or \"injectivity\", got {other:?}"
            ))))
        }
    }
    .map_err(err)?;
    Report::new("monte-carlo", &summary)
}

/// Central points making `G o f` singular at `q0`.
#[pyfunction]
fn bad_p_immersion(f: &PyManifold, q0: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(genericity::construct_bad_p_immersion(&f.inner, &q0)
        .map_err(err)?
        .to_rows())
}

/// Central points making `G o f` identify `q1` and `q2`.
#[pyfunction]
fn bad_p_injectivity(f: &PyManifold, q1: Vec<f64>, q2: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    Ok(genericity::construct_bad_p_injectivity(&f.inner, &q1, &q2)
        .map_err(err)?
        .to_rows())
}

#[pymodule]
fn gdsq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGdsMap>()?;
    m.add_class::<PyManifold>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(compose_jacobian, m)?)?;
    m.add_function(wrap_pyfunction!(check_immersion, m)?)?;
    m.add_function(wrap_pyfunction!(check_injectivity, m)?)?;
    m.add_function(wrap_pyfunction!(check_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma_singular, m)?)?;
    m.add_function(wrap_pyfunction!(find_collision, m)?)?;
    m.add_function(wrap_pyfunction!(trace_singular_curve, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo, m)?)?;
    m.add_function(wrap_pyfunction!(bad_p_immersion, m)?)?;
    m.add_function(wrap_pyfunction!(bad_p_injectivity, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
