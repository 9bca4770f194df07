use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("local edge index {0} out of range (expected 0..4)")]
    InvalidLocalEdge(usize),

    #[error("point ({x}, {y}) lies outside element {element}")]
    PointOutsideElement { element: usize, x: f64, y: f64 },

    #[error("material bound violated on element {element}: {detail}")]
    MaterialBounds { element: usize, detail: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("diagonal entry {index} must be strictly positive, got {value}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("dense factorization failed: pivot {index} is {value:e}")]
    SingularMatrix { index: usize, value: f64 },

    #[error("power iteration stagnated after {iterations} iterations (last relative change {change:e})")]
    PowerIterationStagnation { iterations: usize, change: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("manufactured solution `{name}` fails its residual check ({residual:e})")]
    ManufacturedResidual { name: String, residual: f64 },

    #[error("problem has no exact solution attached")]
    MissingExactSolution,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
