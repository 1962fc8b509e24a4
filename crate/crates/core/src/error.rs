use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-conforming mesh: {0}")]
    NonConforming(String),

    #[error("degenerate element {element} (signed area {area:e})")]
    DegenerateElement { element: usize, area: f64 },

    #[error("unknown locus: {0}")]
    UnknownLocus(String),

    #[error("unsupported polynomial degree {0} (expected 1..=4)")]
    UnsupportedDegree(usize),

    #[error("point ({x}, {y}) lies outside element {element}")]
    PointOutsideElement { element: usize, x: f64, y: f64 },

    #[error("singular local mass matrix on element {0}")]
    SingularMassMatrix(usize),

    #[error("quadrature node coincides with singular point ({x}, {y})")]
    SingularPointOnQuadratureNode { x: f64, y: f64 },

    #[error("quadrature plan does not match the mesh or region: {0}")]
    PlanMismatch(String),

    #[error("quadrature failure on element {element}: {reason}")]
    QuadratureFailure { element: usize, reason: String },

    #[error("non-positive coefficient {value} on element {element}")]
    NonPositiveValue { element: usize, value: f64 },

    #[error("elements {from} and {to} are not both in the star of node {node}")]
    LocusMismatch { node: usize, from: usize, to: usize },

    #[error("no monotone path from element {from} to element {to} inside the star of node {node}")]
    NoMonotonePath { node: usize, from: usize, to: usize },

    #[error("solver failure after {iterations} iterations (relative residual {residual:e}, contrast {contrast:e})")]
    SolverFailure {
        iterations: usize,
        residual: f64,
        contrast: f64,
    },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("coefficient field is not quasi-monotone (node {node}, elements {from} -> {to})")]
    RefusesNonQM { node: usize, from: usize, to: usize },

    #[error("i/o failure: {0}")]
    IoFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::IoFailure(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}
