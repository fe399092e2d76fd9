//! Triangulations, uniform red refinement, and the model domains.
//!
//! Every mesh is stored with a globally oriented edge list. An edge keeps its
//! endpoints with the smaller vertex id first, the unit tangent pointing from
//! the first to the second endpoint, and the unit normal obtained by rotating
//! the tangent clockwise, `n = (t_y, -t_x)`. All normal-normal and
//! tangential-normal traces of symmetric tensors are invariant under a
//! simultaneous sign flip of `(n, t)`, so this fixed orientation is a pure
//! bookkeeping convention.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;

pub type VertexId = usize;
pub type CellId = usize;
pub type EdgeId = usize;

/// A point of the polygonal domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// An oriented mesh edge.
#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex ids, smaller first.
    pub endpoints: (VertexId, VertexId),
    /// Unit tangent from `endpoints.0` to `endpoints.1`.
    pub tangent: [f64; 2],
    /// Unit normal `(t_y, -t_x)`.
    pub normal: [f64; 2],
    pub length: f64,
    pub boundary: bool,
    /// Adjacent cells in discovery order; interior edges have two.
    pub cells: (CellId, Option<CellId>),
}

/// Reference from a cell to one of its edges.
///
/// The outward unit normal of the cell on this edge is `sign * edge.normal`.
#[derive(Clone, Copy, Debug)]
pub struct CellEdge {
    pub edge: EdgeId,
    pub sign: f64,
}

/// A conforming triangulation of a simply connected polygonal domain.
#[derive(Clone, Debug)]
pub struct Triangulation {
    pub vertices: Vec<Point2>,
    /// Vertex triples in counterclockwise order.
    pub cells: Vec<[VertexId; 3]>,
    pub edges: Vec<Edge>,
    /// Per cell, its three edges; local edge `k` is opposite local vertex `k`.
    pub cell_edges: Vec<[CellEdge; 3]>,
    pub areas: Vec<f64>,
    /// Ids of vertices not lying on any boundary edge, ascending.
    pub interior_vertices: Vec<VertexId>,
    /// Maps a vertex id to its interior degree-of-freedom index, if interior.
    pub interior_index: Vec<Option<usize>>,
    pub level_tag: u32,
}

/// Connectivity between a mesh and its uniform red refinement.
#[derive(Clone, Debug)]
pub struct RefinementMap {
    /// Fine cell -> coarse parent cell.
    pub coarse_cell_of_fine_cell: Vec<CellId>,
    /// Coarse edge -> fine vertex at its midpoint.
    pub fine_vertex_of_coarse_edge: Vec<VertexId>,
    /// Coarse vertex -> fine vertex (the identity embedding here).
    pub coarse_vertex_embedding: Vec<VertexId>,
}

/// The two domains of the reference experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// Unit square (0,1) x (0,1).
    Square,
    /// (-1,1) x (-1,1) with the quadrant [0,1) x (-1,0] removed.
    LShape,
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square" => Ok(Domain::Square),
            "lshape" => Ok(Domain::LShape),
            other => Err(Error::Config(format!("unknown domain '{other}'"))),
        }
    }
}

impl std::fmt::Display for Domain {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Domain::Square => write!(f, "square"),
            Domain::LShape => write!(f, "lshape"),
        }
    }
}

fn rot_cw(d: [f64; 2]) -> [f64; 2] {
    [d[1], -d[0]]
}

impl Triangulation {
    /// Builds a triangulation from vertex coordinates and CCW vertex triples.
    ///
    /// Edges are enumerated once, in first-encounter order over cells, with
    /// the canonical orientation described in the module docs.
    pub fn build(vertices: Vec<Point2>, cells: Vec<[VertexId; 3]>) -> Result<Self> {
        Self::build_tagged(vertices, cells, 1)
    }

    fn build_tagged(
        vertices: Vec<Point2>,
        cells: Vec<[VertexId; 3]>,
        level_tag: u32,
    ) -> Result<Self> {
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(cells.len());
        for (c, tri) in cells.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::NonConforming(format!(
                        "cell {c} references vertex {v} out of range"
                    )));
                }
            }
            let [a, b, d] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let area2 = (b.x - a.x) * (d.y - a.y) - (b.y - a.y) * (d.x - a.x);
            if area2 == 0.0 {
                return Err(Error::DegenerateCell { cell: c });
            }
            if area2 < 0.0 {
                return Err(Error::NonCcwCell {
                    cell: c,
                    area: 0.5 * area2,
                });
            }
            areas.push(0.5 * area2);
        }

        let mut edge_of = HashMap::<(VertexId, VertexId), EdgeId>::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut cell_edges = vec![
            [CellEdge {
                edge: usize::MAX,
                sign: 0.0
            }; 3];
            cells.len()
        ];
        for (c, tri) in cells.iter().enumerate() {
            // Local edge k is opposite local vertex k; traversal is CCW.
            let local = [(tri[1], tri[2]), (tri[2], tri[0]), (tri[0], tri[1])];
            for (k, &(p, q)) in local.iter().enumerate() {
                let key = (p.min(q), p.max(q));
                let id = match edge_of.get(&key) {
                    Some(&id) => {
                        let e = &mut edges[id];
                        if e.cells.1.is_some() {
                            return Err(Error::NonConforming(format!(
                                "edge ({}, {}) shared by more than two cells",
                                key.0, key.1
                            )));
                        }
                        e.cells.1 = Some(c);
                        id
                    }
                    None => {
                        let (a, b) = key;
                        let (pa, pb) = (vertices[a], vertices[b]);
                        let dx = pb.x - pa.x;
                        let dy = pb.y - pa.y;
                        let length = dx.hypot(dy);
                        if length == 0.0 {
                            return Err(Error::NonConforming(format!(
                                "edge ({a}, {b}) has zero length"
                            )));
                        }
                        let tangent = [dx / length, dy / length];
                        let id = edges.len();
                        edges.push(Edge {
                            endpoints: key,
                            tangent,
                            normal: [tangent[1], -tangent[0]],
                            length,
                            boundary: false,
                            cells: (c, None),
                        });
                        edge_of.insert(key, id);
                        id
                    }
                };
                // Outward normal of the CCW traversal p -> q.
                let dir = [
                    vertices[q].x - vertices[p].x,
                    vertices[q].y - vertices[p].y,
                ];
                let out = rot_cw(dir);
                let dot = out[0] * edges[id].normal[0] + out[1] * edges[id].normal[1];
                cell_edges[c][k] = CellEdge {
                    edge: id,
                    sign: if dot > 0.0 { 1.0 } else { -1.0 },
                };
            }
        }

        let mut touched = vec![false; nv];
        let mut on_boundary = vec![false; nv];
        for e in &mut edges {
            e.boundary = e.cells.1.is_none();
            touched[e.endpoints.0] = true;
            touched[e.endpoints.1] = true;
            if e.boundary {
                on_boundary[e.endpoints.0] = true;
                on_boundary[e.endpoints.1] = true;
            }
        }
        if let Some(v) = touched.iter().position(|t| !t) {
            return Err(Error::NonConforming(format!(
                "vertex {v} is not referenced by any cell"
            )));
        }

        // Interior edges must be traversed once in each direction.
        for (c, ces) in cell_edges.iter().enumerate() {
            for ce in ces {
                let e = &edges[ce.edge];
                if let Some(c2) = e.cells.1 {
                    let other = if e.cells.0 == c { c2 } else { e.cells.0 };
                    let k2 = cell_edges[other]
                        .iter()
                        .position(|o| o.edge == ce.edge)
                        .expect("adjacent cell lists the shared edge");
                    if cell_edges[other][k2].sign == ce.sign {
                        return Err(Error::NonConforming(format!(
                            "cells {c} and {other} traverse edge {} in the same direction",
                            ce.edge
                        )));
                    }
                }
            }
        }

        // Euler relation for a simply connected triangulated polygon.
        let euler = cells.len() as i64 - edges.len() as i64 + nv as i64;
        if euler != 1 {
            return Err(Error::NonConforming(format!(
                "Euler characteristic check failed: C - E + V = {euler}, expected 1"
            )));
        }

        let mut interior_vertices = Vec::new();
        let mut interior_index = vec![None; nv];
        for v in 0..nv {
            if !on_boundary[v] {
                interior_index[v] = Some(interior_vertices.len());
                interior_vertices.push(v);
            }
        }

        Ok(Self {
            vertices,
            cells,
            edges,
            cell_edges,
            areas,
            interior_vertices,
            interior_index,
            level_tag,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_interior_vertices(&self) -> usize {
        self.interior_vertices.len()
    }

    pub fn cell_points(&self, c: CellId) -> [Point2; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, f64::max)
    }

    /// Gradients of the three barycentric coordinates of cell `c`.
    pub fn barycentric_gradients(&self, c: CellId) -> [[f64; 2]; 3] {
        let p = self.cell_points(c);
        let inv2a = 1.0 / (2.0 * self.areas[c]);
        let mut g = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 2) % 3];
            let b = p[(i + 1) % 3];
            let d = [a.x - b.x, a.y - b.y];
            g[i] = [-d[1] * inv2a, d[0] * inv2a];
        }
        g
    }

    /// Serializes to the plain text format: `nv nc`, then `x y` per vertex,
    /// then `i j k` per cell (0-based, CCW). Floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.num_vertices(), self.num_cells());
        for p in &self.vertices {
            let _ = writeln!(s, "{} {}", p.x, p.y);
        }
        for c in &self.cells {
            let _ = writeln!(s, "{} {} {}", c[0], c[1], c[2]);
        }
        s
    }

    /// Parses the plain text format accepted by [`Triangulation::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::MeshParse("empty mesh file".into()))?;
        let mut it = header.split_whitespace();
        let nv: usize = parse_field(it.next(), "vertex count")?;
        let nc: usize = parse_field(it.next(), "cell count")?;
        let mut vertices = Vec::with_capacity(nv);
        for i in 0..nv {
            let line = lines
                .next()
                .ok_or_else(|| Error::MeshParse(format!("missing vertex line {i}")))?;
            let mut it = line.split_whitespace();
            let x: f64 = parse_field(it.next(), "x coordinate")?;
            let y: f64 = parse_field(it.next(), "y coordinate")?;
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::MeshParse(format!("non-finite vertex {i}")));
            }
            vertices.push(Point2::new(x, y));
        }
        let mut cells = Vec::with_capacity(nc);
        for i in 0..nc {
            let line = lines
                .next()
                .ok_or_else(|| Error::MeshParse(format!("missing cell line {i}")))?;
            let mut it = line.split_whitespace();
            let a: usize = parse_field(it.next(), "cell vertex")?;
            let b: usize = parse_field(it.next(), "cell vertex")?;
            let c: usize = parse_field(it.next(), "cell vertex")?;
            cells.push([a, b, c]);
        }
        Self::build(vertices, cells)
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::MeshParse(format!("missing {what}")))?
        .parse()
        .map_err(|_| Error::MeshParse(format!("malformed {what}")))
}

/// The coarsest mesh of a reference domain.
///
/// Both domains start from a grid of squares of side 1/8 (square domain) or
/// 1/4 (L-shape), each split along the diagonal from the lower-left to the
/// upper-right corner. With this sizing, `k - 1` uniform refinements of the
/// level-1 mesh produce the level-`k` vertex counts of the reference
/// iteration tables (1089 at level 3 on the square, 833 on the L-shape).
pub fn initial_mesh(domain: Domain) -> Triangulation {
    let tri = match domain {
        Domain::Square => grid_mesh(8, 0.125, 0.0, 0.0, |_, _| true),
        Domain::LShape => grid_mesh(8, 0.25, -1.0, -1.0, |x1, y0| y0 >= 0.0 || x1 <= 0.0),
    };
    tri.expect("reference domain meshes are valid by construction")
}

/// Uniform `n x n` grid of squares with lower-left corner `(x0, y0)` and
/// spacing `h`; `keep(x_right, y_bottom)` selects which squares survive.
fn grid_mesh(
    n: usize,
    h: f64,
    x0: f64,
    y0: f64,
    keep: impl Fn(f64, f64) -> bool,
) -> Result<Triangulation> {
    let mut vertex_id = vec![usize::MAX; (n + 1) * (n + 1)];
    let mut vertices = Vec::new();
    let mut cells = Vec::new();
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut get = |i: usize, j: usize, vertices: &mut Vec<Point2>| {
        let slot = &mut vertex_id[idx(i, j)];
        if *slot == usize::MAX {
            *slot = vertices.len();
            vertices.push(Point2::new(x0 + h * i as f64, y0 + h * j as f64));
        }
        *slot
    };
    for j in 0..n {
        for i in 0..n {
            let (xr, yb) = (x0 + h * (i + 1) as f64, y0 + h * j as f64);
            if !keep(xr, yb) {
                continue;
            }
            let a = get(i, j, &mut vertices);
            let b = get(i + 1, j, &mut vertices);
            let c = get(i + 1, j + 1, &mut vertices);
            let d = get(i, j + 1, &mut vertices);
            // Split along the a -> c diagonal.
            cells.push([a, b, c]);
            cells.push([a, c, d]);
        }
    }
    Triangulation::build(vertices, cells)
}

/// Splits every cell into four congruent children at the edge midpoints.
pub fn refine_uniform(coarse: &Triangulation) -> (Triangulation, RefinementMap) {
    let nv = coarse.num_vertices();
    let mut vertices = coarse.vertices.clone();
    let mut fine_vertex_of_coarse_edge = Vec::with_capacity(coarse.num_edges());
    for e in &coarse.edges {
        let (a, b) = e.endpoints;
        let (pa, pb) = (coarse.vertices[a], coarse.vertices[b]);
        fine_vertex_of_coarse_edge.push(vertices.len());
        vertices.push(Point2::new(0.5 * (pa.x + pb.x), 0.5 * (pa.y + pb.y)));
    }

    let mut cells = Vec::with_capacity(4 * coarse.num_cells());
    let mut coarse_cell_of_fine_cell = Vec::with_capacity(4 * coarse.num_cells());
    for (c, tri) in coarse.cells.iter().enumerate() {
        let [v0, v1, v2] = *tri;
        let m = |k: usize| fine_vertex_of_coarse_edge[coarse.cell_edges[c][k].edge];
        // Midpoint m(k) sits on the edge opposite local vertex k.
        let (m0, m1, m2) = (m(0), m(1), m(2));
        cells.push([v0, m2, m1]);
        cells.push([v1, m0, m2]);
        cells.push([v2, m1, m0]);
        cells.push([m0, m1, m2]);
        coarse_cell_of_fine_cell.extend_from_slice(&[c; 4]);
    }

    let fine = Triangulation::build_tagged(vertices, cells, coarse.level_tag + 1)
        .expect("red refinement of a conforming mesh is conforming");
    let map = RefinementMap {
        coarse_cell_of_fine_cell,
        fine_vertex_of_coarse_edge,
        coarse_vertex_embedding: (0..nv).collect(),
    };
    (fine, map)
}

/// The coarse parent of a fine cell.
pub fn containing_coarse_cell(map: &RefinementMap, fine_cell: CellId) -> Result<CellId> {
    map.coarse_cell_of_fine_cell
        .get(fine_cell)
        .copied()
        .ok_or(Error::UnknownCell { cell: fine_cell })
}
