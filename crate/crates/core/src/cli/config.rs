//! Experiment configuration: JSON descriptors for the map, the manifold and
//! per-command options. Parsing reports the path to the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::GdsError;
use crate::genericity::{sample_central_points, sample_map, trial_rng, Distribution, Theorem};
use crate::manifolds::{self, Axis, ParamDomain, ParamManifold};
use crate::maps::{CentralPoints, CoefficientMatrix, GdsMap};
use crate::tolerances::Tolerances;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config error at `{path}`: {message}")]
    Field { path: String, message: String },
}

impl ConfigError {
    pub fn field(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Field {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    DistanceSquared,
    Lorentzian,
    /// Random coefficients and Gaussian central points drawn from the seed.
    Random,
}

/// `{"A", "p"}`, `{"kind", "p"}`, `{"A" | "kind", "sample"}` or
/// `{"kind": "random", "m"}`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDescriptor {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MapKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<Distribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisDescriptor {
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ManifoldDescriptor {
    Circle {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "two")]
        m: usize,
    },
    Trefoil,
    FigureEight,
    Cusp,
    Torus {
        #[serde(default = "four")]
        m: usize,
        #[serde(rename = "R", default = "two_f")]
        big: f64,
        #[serde(rename = "r", default = "one")]
        small: f64,
    },
    Expr {
        coords: Vec<String>,
        domain: Vec<AxisDescriptor>,
        #[serde(default = "yes")]
        claims_immersion: bool,
        #[serde(default = "yes")]
        claims_injective: bool,
    },
}

fn one() -> f64 {
    1.0
}
fn two_f() -> f64 {
    2.0
}
fn two() -> usize {
    2
}
fn four() -> usize {
    4
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowDescriptor {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BadKind {
    Immersion,
    Injectivity,
}

/// Command options; every field is optional and command-line flags override.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub seed: Option<u64>,
    pub grid: Option<Vec<usize>>,
    pub refine_rounds: Option<usize>,
    pub delta: Option<f64>,
    pub starts: Option<usize>,
    pub max_iterations: Option<usize>,
    pub trials: Option<usize>,
    pub theorem: Option<Theorem>,
    pub distribution: Option<Distribution>,
    pub allow_hypothesis_violation: Option<bool>,
    pub window: Option<WindowDescriptor>,
    pub step: Option<f64>,
    pub seed_grid: Option<usize>,
    pub attempts: Option<usize>,
    pub x: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub q1: Option<Vec<f64>>,
    pub q2: Option<Vec<f64>>,
    pub bad_kind: Option<BadKind>,
    pub tolerances: Option<Tolerances>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub map: Option<MapDescriptor>,
    #[serde(default)]
    pub manifold: Option<ManifoldDescriptor>,
    #[serde(default)]
    pub options: Options,
    #[serde(default)]
    pub outputs: Outputs,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::field(path, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Semantic checks that the type layer cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let o = &self.options;
        if let Some(t) = &o.tolerances {
            t.validate()
                .map_err(|e| ConfigError::field("options.tolerances", e))?;
        }
        let positive = [
            ("options.delta", o.delta),
            ("options.step", o.step),
        ];
        for (path, v) in positive {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(ConfigError::field(path, format!("must be positive, got {v}")));
                }
            }
        }
        if let Some(grid) = &o.grid {
            if grid.iter().any(|&r| r < 2) {
                return Err(ConfigError::field("options.grid", "every resolution must be >= 2"));
            }
        }
        if let Some(d) = &o.distribution {
            d.validate()
                .map_err(|e| ConfigError::field("options.distribution", e))?;
        }
        if let Some(map) = &self.map {
            map.validate_shape()?;
        }
        Ok(())
    }
}

impl MapDescriptor {
    fn validate_shape(&self) -> Result<(), ConfigError> {
        let has = (self.a.is_some(), self.kind.is_some(), self.p.is_some(), self.sample.is_some());
        match has {
            (true, true, _, _) => Err(ConfigError::field("map", "give either `A` or `kind`, not both")),
            (_, _, true, true) => Err(ConfigError::field("map", "give either `p` or `sample`, not both")),
            (false, false, _, _) => Err(ConfigError::field("map", "missing `A` or `kind`")),
            _ if self.kind == Some(MapKind::Random) => {
                if self.p.is_some() || self.sample.is_some() {
                    Err(ConfigError::field("map", "kind `random` draws its own central points"))
                } else {
                    Ok(())
                }
            }
            (_, _, false, false) => Err(ConfigError::field("map", "missing `p` or `sample`")),
            _ => {
                if let Some(d) = &self.sample {
                    d.validate().map_err(|e| ConfigError::field("map.sample", e))?;
                }
                Ok(())
            }
        }
    }

    /// Builds the map; `m_hint` supplies the dimension for sampled
    /// special-kind maps without explicit `A`.
    pub fn build(&self, seed: u64, m_hint: Option<usize>) -> Result<GdsMap, ConfigError> {
        self.validate_shape()?;
        let dim = |what: &str| {
            self.m
                .or(m_hint)
                .or_else(|| self.a.as_ref().map(Vec::len))
                .or_else(|| self.p.as_ref().map(|p| p.first().map_or(0, Vec::len)))
                .ok_or_else(|| ConfigError::field("map.m", format!("dimension needed for {what}")))
        };
        if self.kind == Some(MapKind::Random) {
            let m = dim("a random map")?;
            return sample_map(m, &mut trial_rng(seed, 0)).map_err(|e| ConfigError::field("map", e));
        }
        let points = match (&self.p, &self.sample) {
            (Some(p), _) => CentralPoints::new(p.clone()).map_err(|e| ConfigError::field("map.p", e))?,
            (None, Some(d)) => {
                let m = dim("sampled central points")?;
                sample_central_points(m, d, &mut trial_rng(seed, 0))
                    .map_err(|e| ConfigError::field("map.sample", e))?
            }
            (None, None) => unreachable!("validated above"),
        };
        let a = match (&self.a, self.kind) {
            (Some(rows), _) => {
                CoefficientMatrix::new(rows.clone()).map_err(|e| ConfigError::field("map.A", e))?
            }
            (None, Some(MapKind::DistanceSquared)) => {
                CoefficientMatrix::ones(points.count(), points.dim())
            }
            (None, Some(MapKind::Lorentzian)) => {
                CoefficientMatrix::lorentzian(points.count(), points.dim())
            }
            _ => unreachable!("validated above"),
        };
        GdsMap::new(a, points).map_err(|e| ConfigError::field("map", e))
    }

    /// Coefficient matrix alone, for Monte Carlo runs where `p` varies.
    pub fn coefficients(&self, m: usize) -> Result<CoefficientMatrix, ConfigError> {
        match (&self.a, self.kind) {
            (Some(rows), _) => {
                CoefficientMatrix::new(rows.clone()).map_err(|e| ConfigError::field("map.A", e))
            }
            (None, Some(MapKind::Lorentzian)) => Ok(CoefficientMatrix::lorentzian(m, m)),
            (None, _) => Ok(CoefficientMatrix::ones(m, m)),
        }
    }
}

impl ManifoldDescriptor {
    /// Built-in specimen by name with default parameters.
    pub fn named(name: &str) -> Result<Self, ConfigError> {
        Ok(match name {
            "circle" => ManifoldDescriptor::Circle {
                radius: 1.0,
                center: None,
                m: 2,
            },
            "circle3" => ManifoldDescriptor::Circle {
                radius: 1.0,
                center: None,
                m: 3,
            },
            "trefoil" => ManifoldDescriptor::Trefoil,
            "figure-eight" => ManifoldDescriptor::FigureEight,
            "cusp" => ManifoldDescriptor::Cusp,
            "torus" => ManifoldDescriptor::Torus {
                m: 4,
                big: 2.0,
                small: 1.0,
            },
            "torus5" => ManifoldDescriptor::Torus {
                m: 5,
                big: 2.0,
                small: 1.0,
            },
            other => {
                return Err(ConfigError::field(
                    "manifold",
                    format!(
                        "unknown specimen {other:?} (circle, circle3, trefoil, figure-eight, cusp, torus, torus5)"
                    ),
                ))
            }
        })
    }

    pub fn build(&self) -> Result<ParamManifold, ConfigError> {
        let wrap = |e: GdsError| ConfigError::field("manifold", e);
        match self {
            ManifoldDescriptor::Circle { radius, center, m } => {
                let c = center.clone().unwrap_or_else(|| vec![0.0; *m]);
                manifolds::circle(*radius, &c, *m).map_err(wrap)
            }
            ManifoldDescriptor::Trefoil => Ok(manifolds::trefoil()),
            ManifoldDescriptor::FigureEight => Ok(manifolds::figure_eight()),
            ManifoldDescriptor::Cusp => Ok(manifolds::cusp_curve()),
            ManifoldDescriptor::Torus { m, big, small } => {
                manifolds::torus_surface(*m, *big, *small).map_err(wrap)
            }
            ManifoldDescriptor::Expr {
                coords,
                domain,
                claims_immersion,
                claims_injective,
            } => {
                let axes = domain
                    .iter()
                    .map(|a| Axis {
                        lo: a.lo,
                        hi: a.hi,
                        periodic: a.periodic,
                    })
                    .collect();
                let domain = ParamDomain::new(axes).map_err(|e| ConfigError::field("manifold.domain", e))?;
                manifolds::expression_manifold(coords.clone(), domain, *claims_immersion, *claims_injective)
                    .map_err(|e| ConfigError::field("manifold.coords", e))
            }
        }
    }
}

/// Default window for planar tracing: `[-4, 4]^2`.
pub const DEFAULT_WINDOW: WindowDescriptor = WindowDescriptor {
    lo: [-4.0, -4.0],
    hi: [4.0, 4.0],
};

/// Default parameter for the bad-p constructors on periodic curves.
pub const DEFAULT_Q: f64 = 1.0;
pub const DEFAULT_Q_PAIR: (f64, f64) = (0.5, 3.0);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_map_config() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"map": {"A": [[1,2],[3,4]], "p": [[0,0],[1,1]]}, "options": {"x": [1, 2]}}"#,
        )
        .unwrap();
        let g = cfg.map.unwrap().build(0, None).unwrap();
        assert_eq!(g.eval(&[1.0, 2.0]).unwrap(), vec![9.0, 4.0]);
    }

    #[test]
    fn errors_carry_field_paths() {
        let err = ExperimentConfig::from_json_str(r#"{"manifold": {"kind": "circle", "radius": "x"}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("manifold"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"options": {"delta": -1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("options.delta"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"options": {"tolerances": {"rank": 0}}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("options.tolerances"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"options": {"bogus": 1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("options"), "{err}");
        let err = ExperimentConfig::from_json_str(r#"{"map": {"A": [[1,0],[1,1]], "p": [[0,0],[1,1]]}}"#)
            .unwrap()
            .map
            .unwrap()
            .build(0, None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("map.A") && err.contains("a[1][2]"), "{err}");
    }

    #[test]
    fn map_shape_rules() {
        for bad in [
            r#"{"map": {"p": [[0]]}}"#,
            r#"{"map": {"A": [[1]], "kind": "lorentzian", "p": [[0]]}}"#,
            r#"{"map": {"A": [[1]], "p": [[0]], "sample": {"gaussian": {"mean": 0, "std": 1}}}}"#,
            r#"{"map": {"A": [[1]]}}"#,
        ] {
            assert!(ExperimentConfig::from_json_str(bad).is_err(), "{bad}");
        }
        let cfg = ExperimentConfig::from_json_str(
            r#"{"map": {"kind": "distance-squared", "sample": {"uniform": {"lo": -1, "hi": 1}}, "m": 3}}"#,
        )
        .unwrap();
        let g = cfg.map.unwrap().build(5, None).unwrap();
        assert_eq!((g.rows(), g.dim()), (3, 3));
        let cfg = ExperimentConfig::from_json_str(r#"{"map": {"kind": "random", "m": 4}}"#).unwrap();
        let g = cfg.map.unwrap().build(5, None).unwrap();
        assert_eq!(g.dim(), 4);
    }

    #[test]
    fn manifold_descriptors() {
        let cfg = ExperimentConfig::from_json_str(
            r#"{"manifold": {"kind": "expr", "coords": ["cos(t1)", "sin(t1)", "0.5*t1"],
                "domain": [{"lo": 0, "hi": 1}]}}"#,
        )
        .unwrap();
        let f = cfg.manifold.unwrap().build().unwrap();
        assert_eq!((f.source_dim(), f.ambient_dim()), (1, 3));
        let cfg = ExperimentConfig::from_json_str(r#"{"manifold": {"kind": "torus", "m": 5, "R": 3, "r": 1}}"#)
            .unwrap();
        assert_eq!(cfg.manifold.unwrap().build().unwrap().ambient_dim(), 5);
        assert!(ManifoldDescriptor::named("sphere").is_err());
        let err = ExperimentConfig::from_json_str(r#"{"manifold": {"kind": "torus", "m": 3}}"#)
            .unwrap()
            .manifold
            .unwrap()
            .build()
            .unwrap_err();
        assert!(err.to_string().contains("m >= 4"));
    }
}
