use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(ValidationReport),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("Gauss-Hermite order {0} out of range 1..=100")]
    QuadratureOrder(usize),

    #[error("negative coordinate {0} passed to mesh lookup")]
    NegativeCoordinate(f64),

    #[error("missing time history: step {step} needs two previous time lines")]
    MissingHistory { step: usize },

    #[error(
        "boundary condition {kind} not admissible: (xi+Lambda)*v_max = {lhs} < xi*eta = {rhs}"
    )]
    InadmissibleBoundary {
        kind: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("non-finite value in {stage} at node {node}")]
    NonFinite { stage: &'static str, node: usize },

    #[error("Riccati coefficient R became negative ({value:e}) at node {node}")]
    NegativeRiccati { node: usize, value: f64 },

    #[error(
        "early exercise boundary escaped the s-domain at time step {step}, variance line {line}; \
         increase s_max"
    )]
    BoundaryEscaped { step: usize, line: usize },

    #[error(
        "no early exercise at maturity (q1 = 0): the American option is never exercised early"
    )]
    NoEarlyExercise,

    #[error("surface mismatch: {0}")]
    SurfaceMismatch(String),

    #[error("density source point ({x0}, {v0}) lies outside the mesh interior")]
    SourceOutsideMesh { x0: f64, v0: f64 },

    #[error("Monte Carlo configuration: {0}")]
    McConfig(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
