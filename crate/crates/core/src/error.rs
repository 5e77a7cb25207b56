use thiserror::Error;

#[derive(Debug, Error)]
pub enum HdgError {
    #[error("unsupported polynomial degree {0} (supported: 1..=4, 0 for pressure)")]
    UnsupportedDegree(usize),
    #[error("unsupported quadrature degree {0} (supported: 1..=20)")]
    UnsupportedQuadratureDegree(usize),
    #[error("point {0:?} lies outside the reference element")]
    PointOutsideReference([f64; 2]),
    #[error("degenerate or inverted cell (det = {det:e})")]
    DegenerateCell { det: f64 },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("interface polyline cannot be represented on the grid: {0}")]
    PolylineNotRepresentable(String),
    #[error("mesh quality: {0}")]
    MeshQuality(String),
    #[error("boundary facet at {midpoint:?} in subdomain {subdomain:?}: {reason}")]
    BoundaryTagging {
        midpoint: [f64; 2],
        subdomain: crate::mesh::Subdomain,
        reason: &'static str,
    },
    #[error("mesh has no structured provenance and cannot be refined")]
    NoProvenance,
    #[error("singular local system: {0}")]
    SingularLocalSystem(String),
    #[error("degree-of-freedom system does not match the mesh: {0}")]
    DofMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular global system: {0}")]
    SingularMatrix(String),
    #[error("linear solve inaccurate: relative residual {0:e}")]
    InaccurateSolve(f64),
    #[error("mesh too large for a dense probe: {cells} cells (limit {limit})")]
    MeshTooLarge { cells: usize, limit: usize },
    #[error("dense linear algebra failed: {0}")]
    DenseFailure(String),
    #[error("scenario has no exact solution")]
    NoExactSolution,
}

pub type Result<T> = std::result::Result<T, HdgError>;
