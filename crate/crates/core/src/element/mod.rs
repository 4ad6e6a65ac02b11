//! Local virtual elements of order 2: degrees of freedom, polynomial
//! projections computable from them, interpolation and stabilization.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, Point2, RowDVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{edge_rule, exact_cell_moments, gauss_legendre, MonomialBasis};
use crate::linalg::{dense_solve_matrix, LinalgError};
use crate::mesh::PolygonalMesh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("element order {0} is not supported; only k = 2 is implemented")]
    UnsupportedOrder(usize),
    #[error("cell {cell}: projector system is singular ({source})")]
    Singular {
        cell: usize,
        #[source]
        source: LinalgError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// C1-conforming: vertex values and scaled vertex gradients.
    Conforming,
    /// C0-nonconforming: vertex values, edge means and edge normal moments.
    Nonconforming,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Conforming => "conforming",
            Family::Nonconforming => "nonconforming",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conforming" | "c1" => Ok(Family::Conforming),
            "nonconforming" | "c0" => Ok(Family::Nonconforming),
            other => Err(format!("unknown element family `{other}` (expected conforming or nonconforming)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DofKind {
    VertexValue,
    VertexGradientX,
    VertexGradientY,
    EdgeValueMoment,
    EdgeNormalMoment,
    CellMoment,
}

/// One local degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DofDescriptor {
    pub kind: DofKind,
    /// Global vertex, edge or cell index.
    pub anchor: usize,
    /// Position of the anchor within the cell (local vertex or edge).
    pub local_anchor: usize,
    pub moment: usize,
    /// Factor applied to the raw functional: `h_xi` for gradients,
    /// `1/h_e` for edge value moments, `1` otherwise.
    pub scale: f64,
}

/// Projection matrices of one cell. Every projector maps a local DOF
/// vector to polynomial coefficients in the cell's scaled monomial basis.
#[derive(Debug, Clone)]
pub struct LocalElement {
    pub cell: usize,
    pub family: Family,
    pub order: usize,
    pub area: f64,
    pub diameter: f64,
    pub basis: MonomialBasis,
    pub layout: Vec<DofDescriptor>,
    /// `D[i][b]`: DOF `i` of monomial `b`.
    pub d: DMatrix<f64>,
    /// H2 projection into P2 (6 x n).
    pub p_h: DMatrix<f64>,
    /// Cell mean (1 x n).
    pub p0_val: RowDVector<f64>,
    /// Cell mean of the gradient (2 x n).
    pub p0_grad: DMatrix<f64>,
    /// Cell mean of the Hessian, rows `H11, H12, H22` (3 x n).
    pub p0_hess: DMatrix<f64>,
    /// L2 projection of the gradient into P1: rows 0..3 are the
    /// coefficients of the x-derivative in `1, X, Y`, rows 3..6 of the
    /// y-derivative (6 x n).
    pub p1_grad: DMatrix<f64>,
    pub lambda: f64,
    pub s_k: f64,
    pub stab: DMatrix<f64>,
    /// Exact integrals of the basis monomials up to degree 4.
    pub moments: Vec<f64>,
}

impl LocalElement {
    pub fn num_dofs(&self) -> usize {
        self.layout.len()
    }

    /// The value projection; equal to the H2 projection for `k <= 4`.
    pub fn p_val(&self) -> &DMatrix<f64> {
        &self.p_h
    }

    /// Cell-mean Hessian as a symmetric matrix.
    pub fn mean_hessian(&self, dofs: &DVector<f64>) -> Matrix2<f64> {
        let h = &self.p0_hess * dofs;
        Matrix2::new(h[0], h[1], h[1], h[2])
    }

    pub fn mean_gradient(&self, dofs: &DVector<f64>) -> Vector2<f64> {
        let g = &self.p0_grad * dofs;
        Vector2::new(g[0], g[1])
    }

    pub fn mean_value(&self, dofs: &DVector<f64>) -> f64 {
        (&self.p0_val * dofs)[0]
    }
}

/// Per-edge data in the cell's CCW traversal.
struct LocalEdge {
    a: usize,
    b: usize,
    len: f64,
    tangent: Vector2<f64>,
    /// Outward for this cell.
    normal: Vector2<f64>,
}

struct CellGeometry {
    points: Vec<Point2<f64>>,
    vertex_h: Vec<f64>,
    edges: Vec<LocalEdge>,
}

impl CellGeometry {
    fn new(mesh: &PolygonalMesh, cell: usize) -> Self {
        let c = mesh.cell(cell);
        let points = mesh.cell_points(cell);
        let m = points.len();
        let edges = (0..m)
            .map(|i| {
                let j = (i + 1) % m;
                let d = points[j] - points[i];
                let len = d.norm();
                let tangent = d / len;
                LocalEdge {
                    a: i,
                    b: j,
                    len,
                    tangent,
                    normal: Vector2::new(tangent.y, -tangent.x),
                }
            })
            .collect();
        Self {
            vertex_h: c.vertices.iter().map(|&v| mesh.vertex_h(v)).collect(),
            points,
            edges,
        }
    }

    fn m(&self) -> usize {
        self.points.len()
    }
}

fn check_order(order: usize) -> Result<(), ElementError> {
    if order == 2 {
        Ok(())
    } else {
        Err(ElementError::UnsupportedOrder(order))
    }
}

/// Number of local DOFs for a cell with `m` vertices: `3m` for both
/// families (`m + 2m` in the nonconforming case).
pub fn num_local_dofs(_family: Family, m: usize) -> usize {
    3 * m
}

pub fn dof_layout(
    mesh: &PolygonalMesh,
    cell: usize,
    family: Family,
    order: usize,
) -> Result<Vec<DofDescriptor>, ElementError> {
    check_order(order)?;
    let c = mesh.cell(cell);
    let mut out = Vec::with_capacity(num_local_dofs(family, c.num_vertices()));
    let dof = |kind, anchor, local_anchor, scale| DofDescriptor {
        kind,
        anchor,
        local_anchor,
        moment: 0,
        scale,
    };
    match family {
        Family::Conforming => {
            for (i, &v) in c.vertices.iter().enumerate() {
                let h = mesh.vertex_h(v);
                out.push(dof(DofKind::VertexValue, v, i, 1.0));
                out.push(dof(DofKind::VertexGradientX, v, i, h));
                out.push(dof(DofKind::VertexGradientY, v, i, h));
            }
        }
        Family::Nonconforming => {
            for (i, &v) in c.vertices.iter().enumerate() {
                out.push(dof(DofKind::VertexValue, v, i, 1.0));
            }
            for (i, &e) in c.edges.iter().enumerate() {
                out.push(dof(DofKind::EdgeValueMoment, e, i, 1.0 / mesh.edge(e).length));
                out.push(dof(DofKind::EdgeNormalMoment, e, i, 1.0));
            }
        }
    }
    Ok(out)
}

/// Evaluates every DOF functional of a smooth function. Edge moments use
/// a Gauss rule exact to `edge_degree`; normal moments use the outward
/// normal of this cell.
fn eval_dofs(
    geom: &CellGeometry,
    family: Family,
    value: &dyn Fn(&Point2<f64>) -> f64,
    grad: &dyn Fn(&Point2<f64>) -> Vector2<f64>,
    edge_degree: usize,
) -> DVector<f64> {
    let m = geom.m();
    let mut out = DVector::zeros(3 * m);
    match family {
        Family::Conforming => {
            for (i, p) in geom.points.iter().enumerate() {
                let g = grad(p) * geom.vertex_h[i];
                out[3 * i] = value(p);
                out[3 * i + 1] = g.x;
                out[3 * i + 2] = g.y;
            }
        }
        Family::Nonconforming => {
            for (i, p) in geom.points.iter().enumerate() {
                out[i] = value(p);
            }
            for (i, e) in geom.edges.iter().enumerate() {
                let rule = edge_rule(geom.points[e.a], geom.points[e.b], edge_degree);
                out[m + 2 * i] = rule.integrate(value) / e.len;
                out[m + 2 * i + 1] = rule.integrate(|p| grad(p).dot(&e.normal));
            }
        }
    }
    out
}

fn cell_basis(mesh: &PolygonalMesh, cell: usize) -> MonomialBasis {
    let c = mesh.cell(cell);
    MonomialBasis::new(c.centroid, c.diameter, 2)
}

/// DOFs of the polynomial with coefficients `coeffs` in the cell's scaled
/// monomial basis of degree 2.
pub fn dofs_of_polynomial(mesh: &PolygonalMesh, cell: usize, family: Family, coeffs: &[f64]) -> DVector<f64> {
    let basis = cell_basis(mesh, cell);
    let geom = CellGeometry::new(mesh, cell);
    eval_dofs(
        &geom,
        family,
        &|p| basis.eval_poly(coeffs, p),
        &|p| basis.eval_poly_gradient(coeffs, p),
        3,
    )
}

/// Canonical interpolant: vertex data pointwise, edge moments by a Gauss
/// rule exact to `quad_order`.
pub fn interpolate(
    mesh: &PolygonalMesh,
    cell: usize,
    family: Family,
    value: &dyn Fn(&Point2<f64>) -> f64,
    grad: &dyn Fn(&Point2<f64>) -> Vector2<f64>,
    quad_order: usize,
) -> DVector<f64> {
    eval_dofs(&CellGeometry::new(mesh, cell), family, value, grad, quad_order)
}

/// Local position of the value DOF at local vertex `i`.
fn value_idx(family: Family, i: usize) -> usize {
    match family {
        Family::Conforming => 3 * i,
        Family::Nonconforming => i,
    }
}

/// Adds `scale * (D2 v, psi)_K` to `row`, using only boundary data:
/// `sum_e (int_e dv/dn) n.psi.n + (v_b - v_a) t.psi.n`.
fn add_hessian_functional(
    geom: &CellGeometry,
    family: Family,
    psi: &Matrix2<f64>,
    scale: f64,
    mut row: impl FnMut(usize, f64),
) {
    let m = geom.m();
    for (i, e) in geom.edges.iter().enumerate() {
        let c_nn = e.normal.dot(&(psi * e.normal)) * scale;
        let c_tn = e.tangent.dot(&(psi * e.normal)) * scale;
        row(value_idx(family, e.b), c_tn);
        row(value_idx(family, e.a), -c_tn);
        match family {
            Family::Conforming => {
                // dv/dn is linear along the edge
                for v in [e.a, e.b] {
                    let w = 0.5 * e.len * c_nn / geom.vertex_h[v];
                    row(3 * v + 1, w * e.normal.x);
                    row(3 * v + 2, w * e.normal.y);
                }
            }
            Family::Nonconforming => row(m + 2 * i + 1, c_nn),
        }
    }
}

/// Coefficients of the edge trace of a DOF vector at parameter `s` in
/// `[0, 1]` along local edge `i`.
fn trace_weights(geom: &CellGeometry, family: Family, i: usize, s: f64, mut add: impl FnMut(usize, f64)) {
    let m = geom.m();
    let e = &geom.edges[i];
    match family {
        Family::Conforming => {
            let (s2, s3) = (s * s, s * s * s);
            let h00 = 1.0 - 3.0 * s2 + 2.0 * s3;
            let h01 = 3.0 * s2 - 2.0 * s3;
            let h10 = (s - 2.0 * s2 + s3) * e.len;
            let h11 = (s3 - s2) * e.len;
            add(3 * e.a, h00);
            add(3 * e.b, h01);
            for (v, w) in [(e.a, h10), (e.b, h11)] {
                let f = w / geom.vertex_h[v];
                add(3 * v + 1, f * e.tangent.x);
                add(3 * v + 2, f * e.tangent.y);
            }
        }
        Family::Nonconforming => {
            // quadratic matching both endpoint values and the edge mean
            let bubble = 6.0 * s * (1.0 - s);
            add(e.a, 1.0 - s - 0.5 * bubble);
            add(e.b, s - 0.5 * bubble);
            add(m + 2 * i, bubble);
        }
    }
}

const HESS_ENTRIES: [Matrix2<f64>; 3] = [
    Matrix2::new(1.0, 0.0, 0.0, 0.0),
    Matrix2::new(0.0, 0.5, 0.5, 0.0),
    Matrix2::new(0.0, 0.0, 0.0, 1.0),
];

/// Assembles every projector and the stabilization of one cell.
pub fn build_projectors(
    mesh: &PolygonalMesh,
    cell: usize,
    family: Family,
    order: usize,
    lambda: f64,
) -> Result<LocalElement, ElementError> {
    let layout = dof_layout(mesh, cell, family, order)?;
    let c = mesh.cell(cell);
    let geom = CellGeometry::new(mesh, cell);
    let basis = cell_basis(mesh, cell);
    let n = layout.len();
    let m = geom.m();
    let area = c.area;

    let mut d = DMatrix::zeros(n, basis.dim());
    for b in 0..basis.dim() {
        let mut coeffs = vec![0.0; basis.dim()];
        coeffs[b] = 1.0;
        let col = eval_dofs(
            &geom,
            family,
            &|p| basis.eval_poly(&coeffs, p),
            &|p| basis.eval_poly_gradient(&coeffs, p),
            3,
        );
        d.set_column(b, &col);
    }

    // Right side of the projector system, one functional per row.
    let mut bmat = DMatrix::zeros(6, n);
    match family {
        Family::Conforming => {
            for i in 0..m {
                bmat[(0, value_idx(family, i))] += 1.0 / m as f64;
            }
            for i in 0..m {
                let w = 1.0 / (m as f64 * geom.vertex_h[i]);
                bmat[(1, 3 * i + 1)] += w;
                bmat[(2, 3 * i + 2)] += w;
            }
        }
        Family::Nonconforming => {
            // mean of the edge means, and the cell average of the gradient
            // (1/|K|) sum_e n_e int_e v
            for (i, e) in geom.edges.iter().enumerate() {
                bmat[(0, m + 2 * i)] += 1.0 / m as f64;
                for r in 0..2 {
                    bmat[(1 + r, m + 2 * i)] += e.normal[r] * e.len / area;
                }
            }
        }
    }
    let hess = basis.hessians(&c.centroid);
    for (r, psi) in hess.iter().enumerate().skip(3) {
        add_hessian_functional(&geom, family, psi, 1.0, |j, v| bmat[(r, j)] += v);
    }
    let g = &bmat * &d;
    let p_h = dense_solve_matrix(&g, &bmat).map_err(|source| ElementError::Singular { cell, source })?;

    let mut p0_hess = DMatrix::zeros(3, n);
    for (r, psi) in HESS_ENTRIES.iter().enumerate() {
        add_hessian_functional(&geom, family, psi, 1.0 / area, |j, v| p0_hess[(r, j)] += v);
    }

    let mut p0_grad = DMatrix::zeros(2, n);
    for (i, e) in geom.edges.iter().enumerate() {
        // weights of int_e v
        let mut edge_int = |j: usize, w: f64| {
            for r in 0..2 {
                p0_grad[(r, j)] += e.normal[r] * w / area;
            }
        };
        match family {
            Family::Conforming => {
                edge_int(3 * e.a, 0.5 * e.len);
                edge_int(3 * e.b, 0.5 * e.len);
                let l2 = e.len * e.len / 12.0;
                for (v, sign) in [(e.a, 1.0), (e.b, -1.0)] {
                    let f = sign * l2 / geom.vertex_h[v];
                    edge_int(3 * v + 1, f * e.tangent.x);
                    edge_int(3 * v + 2, f * e.tangent.y);
                }
            }
            Family::Nonconforming => edge_int(m + 2 * i, e.len),
        }
    }

    let moments = exact_cell_moments(&geom.points, &basis, 4);
    let mut p0_val = RowDVector::zeros(n);
    for b in 0..6 {
        p0_val += p_h.row(b) * (moments[b] / area);
    }

    let p1_grad = gradient_projection(&geom, family, &basis, &moments, &p0_val, area)
        .map_err(|source| ElementError::Singular { cell, source })?;

    let s_k = 1.0 / (c.diameter * c.diameter) + 2.0 * lambda + lambda * lambda * c.diameter * c.diameter;
    let resid = DMatrix::identity(n, n) - &d * &p_h;
    let mut stab = resid.transpose() * &resid * s_k;
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (stab[(i, j)] + stab[(j, i)]);
            stab[(i, j)] = v;
            stab[(j, i)] = v;
        }
    }

    Ok(LocalElement {
        cell,
        family,
        order,
        area,
        diameter: c.diameter,
        basis,
        layout,
        d,
        p_h,
        p0_val,
        p0_grad,
        p0_hess,
        p1_grad,
        lambda,
        s_k,
        stab,
        moments,
    })
}

/// Index of the monomial with exponents `(a, b)` in graded-lex order.
fn monomial_index(a: usize, b: usize) -> usize {
    let j = a + b;
    j * (j + 1) / 2 + b
}

/// L2 projection of the gradient into P1 through
/// `int_K d_i v q = int_dK v q n_i - int_K v d_i q` with `d_i q` constant.
fn gradient_projection(
    geom: &CellGeometry,
    family: Family,
    basis: &MonomialBasis,
    moments: &[f64],
    p0_val: &RowDVector<f64>,
    area: f64,
) -> Result<DMatrix<f64>, LinalgError> {
    let n = p0_val.len();
    let exps = &basis.exponents()[..3];
    let gram = DMatrix::from_fn(3, 3, |i, j| {
        moments[monomial_index(exps[i].0 + exps[j].0, exps[i].1 + exps[j].1)]
    });
    let mut rhs = DMatrix::zeros(6, n);
    let (gs, gw) = gauss_legendre(3);
    for (i, e) in geom.edges.iter().enumerate() {
        let pa = geom.points[e.a];
        let pb = geom.points[e.b];
        for (x, w) in gs.iter().zip(&gw) {
            let s = 0.5 * (x + 1.0);
            let p = pa + (pb - pa) * s;
            let vals = basis.values(&p);
            let w = 0.5 * w * e.len;
            trace_weights(geom, family, i, s, |j, t| {
                for beta in 0..3 {
                    for r in 0..2 {
                        rhs[(3 * r + beta, j)] += w * t * vals[beta] * e.normal[r];
                    }
                }
            });
        }
    }
    let inv_h = 1.0 / basis.scale();
    for j in 0..n {
        rhs[(1, j)] -= inv_h * area * p0_val[j];
        rhs[(5, j)] -= inv_h * area * p0_val[j];
    }
    let mut out = DMatrix::zeros(6, n);
    for r in 0..2 {
        let block = rhs.rows(3 * r, 3).into_owned();
        let sol = dense_solve_matrix(&gram, &block)?;
        out.rows_mut(3 * r, 3).copy_from(&sol);
    }
    Ok(out)
}
