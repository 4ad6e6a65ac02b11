use nalgebra::{DVector, Point2, Vector2};

use crate::basis::edge_rule;
use crate::element::Family;
use crate::mesh::PolygonalMesh;

/// A global unknown after boundary conditions are applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FreeDof {
    VertexValue(usize),
    /// `h_xi grad u . dir` at a vertex.
    VertexGradient { vertex: usize, dir: Vector2<f64> },
    /// Mean over the edge.
    EdgeValue(usize),
    /// `int_e grad u . n_e` with the edge's global normal.
    EdgeNormal(usize),
}

/// Local-to-global map with homogeneous Dirichlet conditions eliminated.
///
/// Every local DOF is a linear combination of free global DOFs; fixed DOFs
/// have an empty combination. Shared normal moments carry the orientation
/// sign, and gradient DOFs at straight boundary vertices are expressed
/// through the single free normal component.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub family: Family,
    free: Vec<FreeDof>,
    local_map: Vec<Vec<Vec<(usize, f64)>>>,
}

/// Two boundary edges meeting at a vertex are treated as collinear when
/// the cross product of their unit tangents is below this.
const STRAIGHT_TOL: f64 = 1e-10;

impl DofMap {
    pub fn new(mesh: &PolygonalMesh, family: Family) -> Self {
        let mut free = Vec::new();
        let mut local_map = Vec::with_capacity(mesh.num_cells());
        match family {
            Family::Conforming => {
                // per vertex: (value, gx, gy) as combinations of free DOFs
                let mut vmap: Vec<[Vec<(usize, f64)>; 3]> = Vec::with_capacity(mesh.num_vertices());
                for v in 0..mesh.num_vertices() {
                    if !mesh.is_boundary_vertex(v) {
                        let base = free.len();
                        free.push(FreeDof::VertexValue(v));
                        free.push(FreeDof::VertexGradient {
                            vertex: v,
                            dir: Vector2::x(),
                        });
                        free.push(FreeDof::VertexGradient {
                            vertex: v,
                            dir: Vector2::y(),
                        });
                        vmap.push([vec![(base, 1.0)], vec![(base + 1, 1.0)], vec![(base + 2, 1.0)]]);
                        continue;
                    }
                    let bedges = mesh.boundary_edges_at(v);
                    let straight = bedges.len() == 2 && {
                        let t1 = mesh.edge(bedges[0]).tangent;
                        let t2 = mesh.edge(bedges[1]).tangent;
                        (t1.x * t2.y - t1.y * t2.x).abs() < STRAIGHT_TOL
                    };
                    if straight {
                        let n = mesh.edge(bedges[0]).normal;
                        let idx = free.len();
                        free.push(FreeDof::VertexGradient { vertex: v, dir: n });
                        vmap.push([vec![], vec![(idx, n.x)], vec![(idx, n.y)]]);
                    } else {
                        vmap.push([vec![], vec![], vec![]]);
                    }
                }
                for cell in mesh.cells() {
                    let mut loc = Vec::with_capacity(3 * cell.vertices.len());
                    for &v in &cell.vertices {
                        loc.extend(vmap[v].iter().cloned());
                    }
                    local_map.push(loc);
                }
            }
            Family::Nonconforming => {
                let mut vfree = vec![None; mesh.num_vertices()];
                for (v, slot) in vfree.iter_mut().enumerate() {
                    if !mesh.is_boundary_vertex(v) {
                        *slot = Some(free.len());
                        free.push(FreeDof::VertexValue(v));
                    }
                }
                let mut efree = Vec::with_capacity(mesh.num_edges());
                for (e, edge) in mesh.edges().iter().enumerate() {
                    let value = if edge.is_boundary() {
                        None
                    } else {
                        free.push(FreeDof::EdgeValue(e));
                        Some(free.len() - 1)
                    };
                    free.push(FreeDof::EdgeNormal(e));
                    efree.push((value, free.len() - 1));
                }
                for cell in mesh.cells() {
                    let m = cell.vertices.len();
                    let mut loc = Vec::with_capacity(3 * m);
                    for &v in &cell.vertices {
                        loc.push(vfree[v].map(|i| vec![(i, 1.0)]).unwrap_or_default());
                    }
                    for (i, &e) in cell.edges.iter().enumerate() {
                        let (value, normal) = efree[e];
                        loc.push(value.map(|i| vec![(i, 1.0)]).unwrap_or_default());
                        loc.push(vec![(normal, cell.edge_signs[i])]);
                    }
                    local_map.push(loc);
                }
            }
        }
        Self {
            family,
            free,
            local_map,
        }
    }

    pub fn num_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_dofs(&self) -> &[FreeDof] {
        &self.free
    }

    /// Combination of free DOFs behind each local DOF of `cell`.
    pub fn local_map(&self, cell: usize) -> &[Vec<(usize, f64)>] {
        &self.local_map[cell]
    }

    /// Local DOF vector of `cell` from a global free-DOF vector.
    pub fn gather(&self, cell: usize, global: &[f64]) -> DVector<f64> {
        let map = &self.local_map[cell];
        DVector::from_iterator(map.len(), map.iter().map(|c| c.iter().map(|&(i, w)| w * global[i]).sum()))
    }

    /// Adds `local` into `global` through the transpose of the map.
    pub fn scatter_add(&self, cell: usize, local: &DVector<f64>, global: &mut [f64]) {
        for (c, v) in self.local_map[cell].iter().zip(local.iter()) {
            for &(i, w) in c {
                global[i] += w * v;
            }
        }
    }

    /// Interpolates a smooth function vanishing on the boundary into the
    /// free DOFs. Edge moments use a Gauss rule exact to `quad_order`.
    pub fn interpolate(
        &self,
        mesh: &PolygonalMesh,
        value: &dyn Fn(&Point2<f64>) -> f64,
        grad: &dyn Fn(&Point2<f64>) -> Vector2<f64>,
        quad_order: usize,
    ) -> Vec<f64> {
        let ends = |e: usize| {
            let ed = mesh.edge(e);
            (mesh.vertices()[ed.vertices[0]], mesh.vertices()[ed.vertices[1]])
        };
        self.free
            .iter()
            .map(|d| match *d {
                FreeDof::VertexValue(v) => value(&mesh.vertices()[v]),
                FreeDof::VertexGradient { vertex, dir } => {
                    mesh.vertex_h(vertex) * grad(&mesh.vertices()[vertex]).dot(&dir)
                }
                FreeDof::EdgeValue(e) => {
                    let (a, b) = ends(e);
                    edge_rule(a, b, quad_order).integrate(value) / mesh.edge(e).length
                }
                FreeDof::EdgeNormal(e) => {
                    let (a, b) = ends(e);
                    let n = mesh.edge(e).normal;
                    edge_rule(a, b, quad_order).integrate(|p| grad(p).dot(&n))
                }
            })
            .collect()
    }
}
