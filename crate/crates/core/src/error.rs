use thiserror::Error;

use crate::eigen::Spectrum;

pub type Result<T, E = DrumError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DrumError {
    #[error("degenerate geometry: {0}")]
    GeometryDegenerate(String),
    #[error("invalid geometry: {0}")]
    GeometryInvalid(String),
    #[error("insufficient points for a rigid fit: {0}")]
    InsufficientPoints(String),
    #[error("copy layout overlaps itself: {0}")]
    LayoutOverlap(String),
    #[error("mesh gluing failed: {0}")]
    MeshGluingError(String),
    #[error("invalid mesh: {0}")]
    MeshInvalid(String),
    #[error("meshes do not match: {0}")]
    MeshMismatch(String),
    #[error("boundary data missing: {0}")]
    BoundaryDataMissing(String),
    #[error("shifted matrix could not be factored: {0}")]
    SolverSingular(String),
    #[error("eigensolver converged {} of {requested} pairs", partial.n_converged)]
    SolverNoConvergence {
        requested: usize,
        partial: Box<Spectrum>,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("value outside converged range: {0}")]
    RangeExceeded(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no transplantation matrix exists for these layouts")]
    TransplantationNotFound,
    #[error("transplanted values disagree at a glued vertex: {0}")]
    TransplantationInconsistent(String),
    #[error("operator is not disjointness-preserving (max overlap {max_overlap:.3e})")]
    NotDisjointnessPreserving { max_overlap: f64 },
    #[error("factored operator has empty support")]
    EmptySupport,
    #[error("recovered point map is not locally isometric: {0}")]
    NotLocallyIsometric(String),
    #[error("component {index} is not rigid (fit rms {rms:.3e})")]
    ComponentNotRigid { index: usize, rms: f64 },
    #[error("congruence criteria contradict the decomposition: {0}")]
    InternalInconsistency(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("parse error: {0}")]
    Parse(String),
}
