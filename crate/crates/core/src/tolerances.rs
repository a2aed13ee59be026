//! Numerical thresholds shared by the checks.
//!
//! The verdict thresholds (`rank`, `collision`, `margin`) are relative: the
//! checks multiply them by a problem scale
//! `max(1, max |a_ij|, diameter of the sampled image)`.

use serde::{Deserialize, Serialize};

use crate::error::{GdsError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// sigma_min below `rank * scale` is a rank drop.
    pub rank: f64,
    /// Image gap below `collision * scale` is a collision.
    pub collision: f64,
    /// Margins above `margin * scale` pass; between the thresholds the
    /// verdict is inconclusive.
    pub margin: f64,
    /// Relative singular-value cutoff for numerical matrix rank.
    pub matrix_rank: f64,
    /// Corrector tolerance on `|det JG|` for traced singular points
    /// (relative to scale).
    pub trace: f64,
    /// Threshold for the fold/cusp tests (relative to scale).
    pub classify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rank: 1e-8,
            collision: 1e-8,
            margin: 1e-5,
            matrix_rank: crate::linalg::DEFAULT_RANK_TOL,
            trace: 1e-10,
            classify: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("rank", self.rank),
            ("collision", self.collision),
            ("margin", self.margin),
            ("matrix_rank", self.matrix_rank),
            ("trace", self.trace),
            ("classify", self.classify),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GdsError::InvalidArgument(format!(
                    "tolerance {name} must be positive, got {v}"
                )));
            }
        }
        if self.margin < self.rank || self.margin < self.collision {
            return Err(GdsError::InvalidArgument(
                "tolerance margin must not be below the rank/collision thresholds".into(),
            ));
        }
        Ok(())
    }
}

/// `max(1, values...)`.
pub fn problem_scale(values: &[f64]) -> f64 {
    values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(1.0, f64::max)
}
