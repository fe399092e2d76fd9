//! Small meshes shared by unit tests.

use crate::mesh::{Point2, Triangulation};

/// Unit square split by the main diagonal: 4 vertices, 2 cells, 5 edges.
pub(crate) fn two_cell_square() -> Triangulation {
    Triangulation::build(
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(1.0, 1.0),
            Point2::new(0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

/// The mesh consisting of the single reference triangle (0,0), (1,0), (0,1).
pub(crate) fn reference_triangle() -> Triangulation {
    Triangulation::build(
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ],
        vec![[0, 1, 2]],
    )
    .unwrap()
}

/// Twice-refined two-cell square: 9 vertices, one interior vertex.
pub(crate) fn nine_vertex_square() -> Triangulation {
    crate::mesh::refine_uniform(&two_cell_square()).0
}
