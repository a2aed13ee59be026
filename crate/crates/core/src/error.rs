use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GdsError {
    #[error("coefficient matrix must have at least one row and one column")]
    EmptyMatrix,
    #[error("coefficient matrix row {row} has {found} entries, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("coefficient a[{row}][{col}] is zero (1-based); every entry must be nonzero")]
    ZeroEntry { row: usize, col: usize },
    #[error("coefficient a[{row}][{col}] is not finite (1-based)")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("central point {index} has dimension {found}, expected {expected}")]
    PointDimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("{found} central points given for a matrix with {expected} rows")]
    PointCount { found: usize, expected: usize },
    #[error("dimension mismatch: expected a vector of length {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("operation requires an equidimensional map (l = m), got l = {rows}, m = {cols}")]
    NotEquidimensional { rows: usize, cols: usize },
    #[error("operation requires a planar map (m = 2), got m = {0}")]
    NotPlanar(usize),
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("parameter coordinate {axis} = {value} lies outside [{lo}, {hi}]")]
    OutOfDomain {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("source dimension n = {n} exceeds ambient dimension m = {m}")]
    SourceTooLarge { n: usize, m: usize },
    #[error("exclusion radius {delta} exceeds the parameter-domain diameter {diameter}")]
    ExclusionTooLarge { delta: f64, diameter: f64 },
    #[error("hypothesis violated: {0} (pass the override flag to explore anyway)")]
    Hypothesis(String),
    #[error("points coincide in the image: {0}")]
    CoincidentImages(String),
    #[error("no collision found after {attempts} attempts (best gap {best_gap:e})")]
    CollisionNotFound { attempts: usize, best_gap: f64 },
    #[error("invalid distribution: {0}")]
    Distribution(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, GdsError>;
