//! Numerical laboratory for generalized distance-squared mappings
//! `G_(p,A)(x)_i = sum_j a_ij (x_j - p_ij)^2`.
//!
//! The crate evaluates these maps and their Jacobians, composes them with
//! parametrized manifolds, checks immersion and injectivity of the
//! composition numerically, analyses the singular set of the
//! equidimensional map itself, and runs seeded Monte Carlo experiments over
//! the central points.

pub mod cli;
pub mod composition;
pub mod genericity;
pub mod dual;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod manifolds;
pub mod maps;
pub mod singularity;
pub mod tolerances;

pub use error::{GdsError, Result};
pub use maps::{distance_squared_map, lorentzian_map, CentralPoints, CoefficientMatrix, GdsMap};
pub use manifolds::{ParamDomain, ParamManifold};
