//! Crate-wide error type.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rectangle: width={width}, height={height}")]
    DegenerateRectangle { width: f64, height: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({0}, {1}) lies outside the computational domain")]
    PointOutsideDomain(f64, f64),

    #[error("mesh is not conforming: edge ({0}, {1}) is shared by more than two triangles")]
    NonConformingMesh(usize, usize),

    #[error("triangle {0} has non-positive signed area {1}")]
    DegenerateTriangle(usize, f64),

    #[error("linear solver did not reach the requested accuracy: relative residual {residual:.3e}")]
    SolverFailure { residual: f64 },

    #[error("level function must be positive on the outer boundary; node {node} has value {value}")]
    BoundarySignViolation { node: usize, value: f64 },

    #[error(
        "gradient magnitude {norm:.3e} at ({x}, {y}) fell below the floor {floor:.3e} while tracing"
    )]
    GradientFloor { x: f64, y: f64, norm: f64, floor: f64 },

    #[error("orbit left the computational domain at step {step} near ({x}, {y})")]
    OrbitEscaped { step: usize, x: f64, y: f64 },

    #[error("orbit did not close after {steps} steps; last distance to the start point {distance:.3e}")]
    OrbitDidNotClose { steps: usize, distance: f64 },

    #[error("singular 2x2 step matrix in the variation recursion at step {step} (det = {det:.3e})")]
    SingularVariationStep { step: usize, det: f64 },

    #[error("the zero set of the level function is empty")]
    EmptyBoundary,

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("malformed input at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(line: usize, msg: impl Into<String>) -> Self {
        Error::Config { line, message: msg.into() }
    }
}
