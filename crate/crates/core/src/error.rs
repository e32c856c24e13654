use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("coefficient field is not elliptic (ellipticity estimate {estimate:e} <= 0)")]
    NonElliptic { estimate: f64 },

    #[error("invalid coefficient field: {0}")]
    InvalidCoefficient(String),

    #[error("atom at {location:?} is not strictly inside the domain (atoms on or outside the boundary are rejected)")]
    BoundaryAtom { location: Vec<f64> },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("truncation level must be positive, got {0}")]
    InvalidTruncation(f64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular operator (zero pivot at row {row})")]
    Singular { row: usize },

    #[error("linear solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("inverse power iteration did not converge after {sweeps} sweeps")]
    EigenNonConvergence { sweeps: usize },

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("mismatched grids: {0}")]
    GridMismatch(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}
