//! Polygonal meshes: data model, structured generators, text I/O and
//! regularity diagnostics.
//!
//! Cells are stored as counter-clockwise vertex loops. Edges are derived
//! once at construction: each edge records the cell on its left (the lower
//! cell index) and, for interior edges, the cell on its right. The edge
//! normal `n_e` is the outward normal of the left cell, so it points from
//! left to right across interior edges and outward on the boundary.

mod generate;
mod io;
mod quality;

pub use generate::{generate_structured, MeshKind, Rectangle};
pub use io::{export_mesh, import_mesh, read_mesh, write_mesh};
pub use quality::{assess_quality, polygon_is_convex, MeshQualityReport};

use std::collections::HashMap;

use nalgebra::{Point2, Vector2};
use thiserror::Error;

/// Errors raised while building or reading a mesh.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("cell {cell}: {reason}")]
    InvalidCell { cell: usize, reason: String },
    #[error("edge ({a}, {b}) is shared by more than two cells")]
    NonManifoldEdge { a: usize, b: usize },
    #[error("edge ({a}, {b}) is traversed in the same direction by cells {first} and {second}")]
    InconsistentOrientation {
        a: usize,
        b: usize,
        first: usize,
        second: usize,
    },
    #[error("vertex {0} is not used by any cell")]
    UnusedVertex(usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFiniteVertex(usize),
    #[error("mesh has no cells")]
    Empty,
    #[error("invalid generator parameters: {0}")]
    Generator(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A mesh edge with its orientation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Endpoints in the order the left cell traverses them.
    pub vertices: [usize; 2],
    pub left: usize,
    /// `None` on the boundary.
    pub right: Option<usize>,
    /// Unit normal, outward for the left cell.
    pub normal: Vector2<f64>,
    /// Unit tangent, `normal` rotated by +90 degrees.
    pub tangent: Vector2<f64>,
    pub length: f64,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }

    pub fn midpoint(&self, mesh: &PolygonalMesh) -> Point2<f64> {
        let a = mesh.vertices[self.vertices[0]];
        let b = mesh.vertices[self.vertices[1]];
        nalgebra::center(&a, &b)
    }
}

/// A polygonal cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Counter-clockwise vertex loop.
    pub vertices: Vec<usize>,
    /// Local edge `i` joins local vertices `i` and `i + 1`.
    pub edges: Vec<usize>,
    /// `+1` when this cell is the left cell of the edge, `-1` otherwise.
    pub edge_signs: Vec<f64>,
    pub area: f64,
    pub centroid: Point2<f64>,
    pub diameter: f64,
}

impl Cell {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
}

/// Immutable polygonal mesh with derived topology and size data.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonalMesh {
    vertices: Vec<Point2<f64>>,
    cells: Vec<Cell>,
    edges: Vec<Edge>,
    boundary_vertex: Vec<bool>,
    vertex_h: Vec<f64>,
    h: f64,
}

impl PolygonalMesh {
    /// Builds a mesh from coordinates and CCW cell loops, validating
    /// orientation, simplicity and edge manifoldness.
    pub fn new(vertices: Vec<Point2<f64>>, cell_loops: Vec<Vec<usize>>) -> Result<Self, MeshError> {
        if cell_loops.is_empty() {
            return Err(MeshError::Empty);
        }
        for (i, p) in vertices.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(MeshError::NonFiniteVertex(i));
            }
        }

        let mut used = vec![false; vertices.len()];
        let mut cells = Vec::with_capacity(cell_loops.len());
        for (c, cell) in cell_loops.into_iter().enumerate() {
            let invalid = |reason: String| MeshError::InvalidCell { cell: c, reason };
            if cell.len() < 3 {
                return Err(invalid(format!("has {} vertices, need at least 3", cell.len())));
            }
            for &v in &cell {
                if v >= vertices.len() {
                    return Err(invalid(format!(
                        "vertex index {v} out of range (mesh has {} vertices)",
                        vertices.len()
                    )));
                }
                used[v] = true;
            }
            for i in 0..cell.len() {
                if cell[i + 1..].contains(&cell[i]) {
                    return Err(invalid(format!("vertex {} repeated", cell[i])));
                }
            }
            let pts: Vec<Point2<f64>> = cell.iter().map(|&v| vertices[v]).collect();
            let area = signed_area(&pts);
            let diameter = polygon_diameter(&pts);
            if area <= 1e-14 * diameter * diameter {
                if area < 0.0 {
                    return Err(invalid("vertices are listed clockwise".into()));
                }
                return Err(invalid("zero area".into()));
            }
            if !is_simple(&pts) {
                return Err(invalid("boundary self-intersects".into()));
            }
            cells.push(Cell {
                centroid: polygon_centroid(&pts, area),
                vertices: cell,
                edges: Vec::new(),
                edge_signs: Vec::new(),
                area,
                diameter,
            });
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(MeshError::UnusedVertex(v));
        }

        // Cells are visited in index order, so the first visitor of an edge
        // is its left cell.
        let mut edges: Vec<Edge> = Vec::new();
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::new();
        for (c, cell) in cells.iter_mut().enumerate() {
            let m = cell.vertices.len();
            for i in 0..m {
                let a = cell.vertices[i];
                let b = cell.vertices[(i + 1) % m];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    None => {
                        let d = vertices[b] - vertices[a];
                        let length = d.norm();
                        let tangent = d / length;
                        let normal = Vector2::new(tangent.y, -tangent.x);
                        lookup.insert(key, edges.len());
                        cell.edges.push(edges.len());
                        cell.edge_signs.push(1.0);
                        edges.push(Edge {
                            vertices: [a, b],
                            left: c,
                            right: None,
                            normal,
                            tangent,
                            length,
                        });
                    }
                    Some(&e) => {
                        let edge = &mut edges[e];
                        if edge.right.is_some() {
                            return Err(MeshError::NonManifoldEdge { a: key.0, b: key.1 });
                        }
                        if edge.vertices != [b, a] {
                            return Err(MeshError::InconsistentOrientation {
                                a,
                                b,
                                first: edge.left,
                                second: c,
                            });
                        }
                        edge.right = Some(c);
                        cell.edges.push(e);
                        cell.edge_signs.push(-1.0);
                    }
                }
            }
        }

        let mut boundary_vertex = vec![false; vertices.len()];
        for e in edges.iter().filter(|e| e.is_boundary()) {
            boundary_vertex[e.vertices[0]] = true;
            boundary_vertex[e.vertices[1]] = true;
        }

        let mut h_sum = vec![0.0; vertices.len()];
        let mut h_count = vec![0usize; vertices.len()];
        for cell in &cells {
            for &v in &cell.vertices {
                h_sum[v] += cell.diameter;
                h_count[v] += 1;
            }
        }
        let vertex_h = h_sum
            .iter()
            .zip(&h_count)
            .map(|(s, &n)| s / n as f64)
            .collect();
        let h = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);

        Ok(Self {
            vertices,
            cells,
            edges,
            boundary_vertex,
            vertex_h,
            h,
        })
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
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

    pub fn cell(&self, k: usize) -> &Cell {
        &self.cells[k]
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    /// Coordinates of the vertices of cell `k`, in CCW order.
    pub fn cell_points(&self, k: usize) -> Vec<Point2<f64>> {
        self.cells[k].vertices.iter().map(|&v| self.vertices[v]).collect()
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    /// Characteristic length of a vertex: mean diameter of the cells around it.
    pub fn vertex_h(&self, v: usize) -> f64 {
        self.vertex_h[v]
    }

    /// Largest cell diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Boundary edges incident to vertex `v`.
    pub fn boundary_edges_at(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_boundary() && e.vertices.contains(&v))
            .map(|(i, _)| i)
            .collect()
    }

    /// `V - E + C`, which equals 1 for a simply connected mesh.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_cells() as i64
    }
}

pub(crate) fn signed_area(pts: &[Point2<f64>]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        let p = pts[i];
        let q = pts[(i + 1) % n];
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s
}

pub(crate) fn polygon_centroid(pts: &[Point2<f64>], area: f64) -> Point2<f64> {
    let n = pts.len();
    // Shift to the first vertex to limit cancellation.
    let o = pts[0];
    let (mut cx, mut cy) = (0.0, 0.0);
    for i in 0..n {
        let p = pts[i] - o;
        let q = pts[(i + 1) % n] - o;
        let cross = p.x * q.y - q.x * p.y;
        cx += (p.x + q.x) * cross;
        cy += (p.y + q.y) * cross;
    }
    Point2::new(o.x + cx / (6.0 * area), o.y + cy / (6.0 * area))
}

pub(crate) fn polygon_diameter(pts: &[Point2<f64>]) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            d = d.max((pts[i] - pts[j]).norm());
        }
    }
    d
}

fn cross(a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

fn segments_intersect(p1: Point2<f64>, p2: Point2<f64>, q1: Point2<f64>, q2: Point2<f64>) -> bool {
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    let scale = (p2 - p1).norm() * (q2 - q1).norm();
    let tol = 1e-14 * scale;
    if ((d1 > tol && d2 < -tol) || (d1 < -tol && d2 > tol))
        && ((d3 > tol && d4 < -tol) || (d3 < -tol && d4 > tol))
    {
        return true;
    }
    // Touching configurations: an endpoint lying on the other segment.
    let on_segment = |a: Point2<f64>, b: Point2<f64>, p: Point2<f64>, d: f64| {
        d.abs() <= tol
            && p.x >= a.x.min(b.x) - 1e-14
            && p.x <= a.x.max(b.x) + 1e-14
            && p.y >= a.y.min(b.y) - 1e-14
            && p.y <= a.y.max(b.y) + 1e-14
    };
    on_segment(p1, p2, q1, d1)
        || on_segment(p1, p2, q2, d2)
        || on_segment(q1, q2, p1, d3)
        || on_segment(q1, q2, p2, d4)
}

fn is_simple(pts: &[Point2<f64>]) -> bool {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            // Skip edges sharing a vertex.
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> PolygonalMesh {
        PolygonalMesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![0, 1, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn single_square_geometry() {
        let m = unit_square();
        assert_eq!(m.num_edges(), 4);
        let c = m.cell(0);
        assert!((c.area - 1.0).abs() < 1e-15);
        assert!((c.centroid - Point2::new(0.5, 0.5)).norm() < 1e-15);
        assert!((c.diameter - 2f64.sqrt()).abs() < 1e-15);
        assert!((m.vertex_h(2) - 2f64.sqrt()).abs() < 1e-15);
        for e in m.edges() {
            assert!(e.is_boundary());
            let mid = e.midpoint(&m);
            // outward
            assert!((mid - Point2::new(0.5, 0.5)).dot(&e.normal) > 0.0);
            assert!((e.tangent - Vector2::new(-e.normal.y, e.normal.x)).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_clockwise_cell() {
        let err = PolygonalMesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![0, 3, 2, 1]],
        )
        .unwrap_err();
        assert!(matches!(err, MeshError::InvalidCell { cell: 0, .. }));
        assert!(err.to_string().contains("clockwise"));
    }

    #[test]
    fn rejects_bow_tie() {
        let err = PolygonalMesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(2.0, 0.0),
                Point2::new(2.0, 2.0),
                Point2::new(1.0, -1.0),
                Point2::new(0.0, 2.0),
            ],
            vec![vec![0, 1, 2, 3, 4]],
        )
        .unwrap_err();
        assert!(err.to_string().contains("self-intersects"), "{err}");
    }

    #[test]
    fn rejects_out_of_range_index_and_unused_vertex() {
        let pts = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(5.0, 5.0),
        ];
        assert!(matches!(
            PolygonalMesh::new(pts.clone(), vec![vec![0, 1, 7]]),
            Err(MeshError::InvalidCell { .. })
        ));
        assert_eq!(
            PolygonalMesh::new(pts, vec![vec![0, 1, 2]]),
            Err(MeshError::UnusedVertex(3))
        );
    }

    #[test]
    fn shared_edge_orientation() {
        let m = PolygonalMesh::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            vec![vec![0, 1, 2], vec![0, 2, 3]],
        )
        .unwrap();
        let interior: Vec<_> = m.edges().iter().filter(|e| !e.is_boundary()).collect();
        assert_eq!(interior.len(), 1);
        let e = interior[0];
        assert_eq!((e.left, e.right), (0, Some(1)));
        // normal points from cell 0 into cell 1
        let d = m.cell(1).centroid - m.cell(0).centroid;
        assert!(d.dot(&e.normal) > 0.0);
        assert_eq!(m.euler_characteristic(), 1);
    }
}
