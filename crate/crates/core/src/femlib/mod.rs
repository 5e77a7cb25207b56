//! Reference-element machinery: polynomial bases, affine maps and quadrature.

pub mod affine;
pub mod basis;
pub mod quadrature;
pub mod reference;

pub use affine::AffineMap;
pub use basis::{dim_triangle, Basis, BasisKind, MAX_DEGREE};
pub use quadrature::{quadrature, QuadratureDomain, QuadratureRule};
pub use reference::{edge_reference_point, ReferenceElement};

/// Cell quadrature degree used for assembly: exact for every polynomial form
/// on affine cells, with margin for non-polynomial data.
pub fn cell_quadrature_degree(k: usize) -> usize {
    (3 * k).max(2 * k + 4)
}

/// Facet quadrature degree used for assembly.
pub fn facet_quadrature_degree(k: usize) -> usize {
    3 * k + 2
}

/// Quadrature degree for error norms, two above the assembly degree.
pub fn error_quadrature_degree(k: usize) -> usize {
    cell_quadrature_degree(k) + 2
}
