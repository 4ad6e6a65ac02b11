//! Global numbering, frozen-control linearization and the nonlinear
//! residual of the stabilized scheme.

mod dofmap;

pub use dofmap::{DofMap, FreeDof};

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, RowDVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{cell_rule, QuadratureError, QuadratureRule};
use crate::element::{build_projectors, ElementError, Family, LocalElement};
use crate::linalg::SparseMatrix;
use crate::mesh::PolygonalMesh;
use crate::problem::{Coefficients, HJBProblem};

/// Default exactness degree of the cell quadrature.
pub const DEFAULT_QUAD_ORDER: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssemblyError {
    #[error(transparent)]
    Element(#[from] ElementError),
    #[error("cell {cell}: {source}")]
    Quadrature {
        cell: usize,
        #[source]
        source: QuadratureError,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// How the load `f` is sampled inside each cell. The coefficients and the
/// control selection always use the cell quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadRule {
    /// `f` frozen at its centroid value on each cell.
    #[default]
    Centroid,
    /// `f` evaluated at every quadrature point.
    Quadrature,
}

impl fmt::Display for LoadRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoadRule::Centroid => "centroid",
            LoadRule::Quadrature => "quadrature",
        })
    }
}

impl FromStr for LoadRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "centroid" => Ok(LoadRule::Centroid),
            "quadrature" => Ok(LoadRule::Quadrature),
            other => Err(format!("unknown load rule `{other}` (expected centroid or quadrature)")),
        }
    }
}

/// Mesh, local elements, quadrature and numbering of one discretization.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: PolygonalMesh,
    pub family: Family,
    pub lambda: f64,
    pub elements: Vec<LocalElement>,
    pub rules: Vec<QuadratureRule>,
    pub load_rule: LoadRule,
    pub dofmap: DofMap,
}

impl Discretization {
    pub fn new(mesh: PolygonalMesh, family: Family, lambda: f64, quad_order: usize) -> Result<Self, AssemblyError> {
        let built: Result<Vec<_>, AssemblyError> = (0..mesh.num_cells())
            .into_par_iter()
            .map(|k| {
                let el = build_projectors(&mesh, k, family, 2, lambda)?;
                let rule = cell_rule(&mesh.cell_points(k), quad_order)
                    .map_err(|source| AssemblyError::Quadrature { cell: k, source })?;
                Ok((el, rule))
            })
            .collect();
        let (elements, rules): (Vec<_>, Vec<_>) = built?.into_iter().unzip();
        let dofmap = DofMap::new(&mesh, family);
        Ok(Self {
            mesh,
            family,
            lambda,
            elements,
            rules,
            load_rule: LoadRule::Centroid,
            dofmap,
        })
    }

    pub fn with_load_rule(mut self, rule: LoadRule) -> Self {
        self.load_rule = rule;
        self
    }

    pub fn num_free(&self) -> usize {
        self.dofmap.num_free()
    }

    pub fn local(&self, cell: usize, u: &[f64]) -> DVector<f64> {
        self.dofmap.gather(cell, u)
    }

    /// Interpolates a smooth function with homogeneous boundary values.
    pub fn interpolate(
        &self,
        value: &dyn Fn(&nalgebra::Point2<f64>) -> f64,
        grad: &dyn Fn(&nalgebra::Point2<f64>) -> Vector2<f64>,
    ) -> Vec<f64> {
        self.dofmap.interpolate(&self.mesh, value, grad, 2 * DEFAULT_QUAD_ORDER)
    }

    fn check_len(&self, u: &[f64]) -> Result<(), AssemblyError> {
        if u.len() != self.num_free() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.num_free(),
                found: u.len(),
            });
        }
        Ok(())
    }
}

/// Cell-constant projected state of a local DOF vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedState {
    pub hessian: Matrix2<f64>,
    pub gradient: Vector2<f64>,
    pub value: f64,
}

impl ProjectedState {
    pub fn of(el: &LocalElement, u: &DVector<f64>) -> Self {
        Self {
            hessian: el.mean_hessian(u),
            gradient: el.mean_gradient(u),
            value: el.mean_value(u),
        }
    }

    /// `tr H - lambda s`.
    pub fn l_lambda(&self, lambda: f64) -> f64 {
        self.hessian.trace() - lambda * self.value
    }
}

/// Selected control and its coefficients at one quadrature point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenPoint {
    pub control: usize,
    pub gamma: f64,
    pub coeffs: Coefficients,
    /// `gamma (L u - f)` for the selected control.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenControlField {
    pub cells: Vec<Vec<FrozenPoint>>,
}

impl FrozenControlField {
    pub fn controls(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells.iter().flatten().map(|p| p.control)
    }

    /// Number of quadrature points whose control differs from `other`.
    pub fn count_changed(&self, other: &FrozenControlField) -> usize {
        self.controls().zip(other.controls()).filter(|(a, b)| a != b).count()
    }
}

/// Picks at every quadrature point the control maximizing
/// `gamma (A:H + b.g - c s - f)` for the projected state of `u`; ties go
/// to the lowest control index.
pub fn select_argmax_controls(
    disc: &Discretization,
    problem: &HJBProblem,
    u: &[f64],
) -> Result<FrozenControlField, AssemblyError> {
    disc.check_len(u)?;
    let nc = problem.num_controls();
    let cells = (0..disc.mesh.num_cells())
        .into_par_iter()
        .map_init(
            || vec![Coefficients::default(); nc],
            |buf, k| {
                let st = ProjectedState::of(&disc.elements[k], &disc.local(k, u));
                let frozen_load: Option<Vec<f64>> = (disc.load_rule == LoadRule::Centroid).then(|| {
                    problem.coefficients_all(&disc.mesh.cell(k).centroid, buf);
                    buf.iter().map(|c| c.f).collect()
                });
                disc.rules[k]
                    .points
                    .iter()
                    .map(|x| {
                        problem.coefficients_all(x, buf);
                        if let Some(f) = &frozen_load {
                            buf.iter_mut().zip(f).for_each(|(c, &f)| c.f = f);
                        }
                        let mut best = FrozenPoint {
                            control: 0,
                            gamma: 0.0,
                            coeffs: buf[0],
                            objective: f64::NEG_INFINITY,
                        };
                        for (i, c) in buf.iter().enumerate() {
                            let g = problem.gamma_of(c);
                            let obj = g * (c.apply(&st.hessian, &st.gradient, st.value) - c.f);
                            if obj > best.objective {
                                best = FrozenPoint {
                                    control: i,
                                    gamma: g,
                                    coeffs: *c,
                                    objective: obj,
                                };
                            }
                        }
                        best
                    })
                    .collect()
            },
        )
        .collect();
    Ok(FrozenControlField { cells })
}

/// Global linear system over the free DOFs.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: SparseMatrix,
    pub rhs: Vec<f64>,
}

/// Rows `L_lambda`, `H11`, `H12`, `H22`, `gx`, `gy`, `s` of one element.
struct Rows {
    l: RowDVector<f64>,
    h: [RowDVector<f64>; 3],
    g: [RowDVector<f64>; 2],
    s: RowDVector<f64>,
}

impl Rows {
    fn of(el: &LocalElement) -> Self {
        let h = [el.p0_hess.row(0).into_owned(), el.p0_hess.row(1).into_owned(), el.p0_hess.row(2).into_owned()];
        let s = el.p0_val.clone();
        let l = &h[0] + &h[2] - &s * el.lambda;
        Self {
            l,
            g: [el.p0_grad.row(0).into_owned(), el.p0_grad.row(1).into_owned()],
            h,
            s,
        }
    }

    /// `A:H + b.g - c s` as a row.
    fn operator(&self, c: &Coefficients) -> RowDVector<f64> {
        &self.h[0] * c.a[(0, 0)] + &self.h[1] * (c.a[(0, 1)] + c.a[(1, 0)]) + &self.h[2] * c.a[(1, 1)]
            + &self.g[0] * c.b.x
            + &self.g[1] * c.b.y
            - &self.s * c.c
    }
}

/// `B_*` on one cell: projected Hessian, gradient and value products.
fn b_star(el: &LocalElement, rows: &Rows) -> DMatrix<f64> {
    let lam = el.lambda;
    let outer = |r: &RowDVector<f64>| r.transpose() * r;
    (outer(&rows.h[0]) + outer(&rows.h[1]) * 2.0 + outer(&rows.h[2])
        + (outer(&rows.g[0]) + outer(&rows.g[1])) * (2.0 * lam)
        + outer(&rows.s) * (lam * lam))
        * el.area
}

/// Element matrix of the `theta`-blended stabilized form for the frozen
/// controls, and the element load.
pub fn element_system(
    el: &LocalElement,
    rule: &QuadratureRule,
    frozen: &[FrozenPoint],
    theta: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let rows = Rows::of(el);
    let n = el.num_dofs();
    let mut acc = RowDVector::zeros(n);
    let mut load = 0.0;
    for (w, fp) in rule.weights.iter().zip(frozen) {
        acc += (rows.operator(&fp.coeffs) * fp.gamma - &rows.l) * *w;
        load += w * fp.gamma * fp.coeffs.f;
    }
    let lt = rows.l.transpose();
    let mut m = &lt * acc;
    m += b_star(el, &rows) * theta;
    m += &lt * &rows.l * ((1.0 - theta) * el.area);
    m += &el.stab;
    (m, lt * load)
}

/// Assembles `a_h^alpha(u, v) = l_alpha(v)` over the free DOFs.
pub fn assemble_linearized(
    disc: &Discretization,
    frozen: &FrozenControlField,
    theta: f64,
) -> Result<LinearSystem, AssemblyError> {
    if frozen.cells.len() != disc.mesh.num_cells() {
        return Err(AssemblyError::DimensionMismatch {
            expected: disc.mesh.num_cells(),
            found: frozen.cells.len(),
        });
    }
    let locals: Vec<_> = (0..disc.mesh.num_cells())
        .into_par_iter()
        .map(|k| element_system(&disc.elements[k], &disc.rules[k], &frozen.cells[k], theta))
        .collect();
    let n = disc.num_free();
    let mut trips = Vec::new();
    let mut rhs = vec![0.0; n];
    for (k, (m, f)) in locals.iter().enumerate() {
        let map = disc.dofmap.local_map(k);
        for (i, ci) in map.iter().enumerate() {
            for &(gi, wi) in ci {
                rhs[gi] += wi * f[i];
                for (j, cj) in map.iter().enumerate() {
                    let mij = m[(i, j)];
                    if mij == 0.0 {
                        continue;
                    }
                    for &(gj, wj) in cj {
                        trips.push((gi, gj, wi * mij * wj));
                    }
                }
            }
        }
    }
    Ok(LinearSystem {
        matrix: SparseMatrix::from_triplets(n, n, &trips),
        rhs,
    })
}

/// The nonlinear form `a_h(u; phi_i)` for every free basis function, with
/// the pointwise supremum over the sampled control set.
pub fn nonlinear_residual(
    disc: &Discretization,
    problem: &HJBProblem,
    u: &[f64],
    theta: f64,
) -> Result<Vec<f64>, AssemblyError> {
    let frozen = select_argmax_controls(disc, problem, u)?;
    let locals: Vec<DVector<f64>> = (0..disc.mesh.num_cells())
        .into_par_iter()
        .map(|k| {
            let el = &disc.elements[k];
            let ul = disc.local(k, u);
            let rows = Rows::of(el);
            let lu = (&rows.l * &ul)[0];
            let sup_sum: f64 = disc.rules[k]
                .weights
                .iter()
                .zip(&frozen.cells[k])
                .map(|(w, fp)| w * (fp.objective - lu))
                .sum();
            let lt = rows.l.transpose();
            &lt * sup_sum
                + b_star(el, &rows) * &ul * theta
                + &lt * (lu * (1.0 - theta) * el.area)
                + &el.stab * &ul
        })
        .collect();
    let mut out = vec![0.0; disc.num_free()];
    for (k, r) in locals.iter().enumerate() {
        disc.dofmap.scatter_add(k, r, &mut out);
    }
    Ok(out)
}

/// `a_h(u; v)`.
pub fn nonlinear_form(
    disc: &Discretization,
    problem: &HJBProblem,
    u: &[f64],
    v: &[f64],
    theta: f64,
) -> Result<f64, AssemblyError> {
    disc.check_len(v)?;
    let r = nonlinear_residual(disc, problem, u, theta)?;
    Ok(r.iter().zip(v).map(|(a, b)| a * b).sum())
}

/// Discrete energy norm: `B_*` on every cell plus the stabilization.
pub fn b_norm(disc: &Discretization, u: &[f64]) -> f64 {
    (0..disc.mesh.num_cells())
        .map(|k| {
            let el = &disc.elements[k];
            let ul = disc.local(k, u);
            let rows = Rows::of(el);
            let m = b_star(el, &rows) + &el.stab;
            ul.dot(&(m * &ul))
        })
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// `sqrt(sum_K |K| |Pi_0 D2 du|^2)`, the Newton stopping quantity.
pub fn hessian_increment_norm(disc: &Discretization, du: &[f64]) -> f64 {
    (0..disc.mesh.num_cells())
        .map(|k| {
            let h = disc.elements[k].mean_hessian(&disc.local(k, du));
            disc.elements[k].area * h.component_mul(&h).sum()
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_structured, MeshKind, Rectangle};
    use crate::problem::{make_builtin, BuiltinOptions};

    #[test]
    fn singleton_field_is_constant() {
        let mesh = generate_structured(MeshKind::Triangle, 2, Rectangle::UNIT, 0).unwrap();
        let p = make_builtin("example1", &BuiltinOptions::default()).unwrap();
        let d = Discretization::new(mesh, Family::Conforming, p.lambda, 4).unwrap();
        let f = select_argmax_controls(&d, &p, &vec![0.3; d.num_free()]).unwrap();
        assert!(f.controls().all(|c| c == 0));
    }

    #[test]
    fn example1_square_system_is_solvable() {
        let mesh = generate_structured(MeshKind::Square, 2, Rectangle::UNIT, 0).unwrap();
        let p = make_builtin("example1", &BuiltinOptions::default()).unwrap();
        let d = Discretization::new(mesh, Family::Conforming, p.lambda, 8).unwrap();
        let f = select_argmax_controls(&d, &p, &[0.0; 7]).unwrap();
        let sys = assemble_linearized(&d, &f, 0.5).unwrap();
        assert_eq!(sys.matrix.nrows(), 7);
        assert!(!sys.matrix.is_symmetric(1e-12));
        let x = crate::linalg::sparse_solve(&sys.matrix, &sys.rhs).unwrap();
        assert!(x.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn stabilization_vanishes_on_quadratics() {
        let mesh = generate_structured(MeshKind::Hexagon, 3, Rectangle::UNIT, 0).unwrap();
        let d = Discretization::new(mesh, Family::Nonconforming, 1.0, 4).unwrap();
        let u = d.interpolate(&|p| p.x * (1.0 - p.x) + 0.3 * p.x * p.y, &|p| {
            Vector2::new(1.0 - 2.0 * p.x + 0.3 * p.y, 0.3 * p.x)
        });
        // only interior cells see the full quadratic
        for k in 0..d.mesh.num_cells() {
            let c = d.mesh.cell(k);
            if c.vertices.iter().any(|&v| d.mesh.is_boundary_vertex(v)) {
                continue;
            }
            let ul = d.local(k, &u);
            assert!((&d.elements[k].stab * &ul).amax() < 1e-12);
        }
    }
}
