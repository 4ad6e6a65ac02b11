use nalgebra::{Matrix3, Point2, Vector3};

use super::PolygonalMesh;

/// Shape-regularity diagnostics for a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshQualityReport {
    /// `min_K min_{e in dK} h_e / h_K`.
    pub min_edge_ratio: f64,
    /// `min_K h_K / h`.
    pub min_cell_ratio: f64,
    /// Per cell: radius of the largest disk inside the kernel, over `h_K`.
    pub star_ratios: Vec<f64>,
    pub min_star_ratio: f64,
    pub convex: Vec<bool>,
    pub all_convex: bool,
    /// Cells with an empty kernel or vanishing area.
    pub degenerate_cells: Vec<usize>,
}

impl MeshQualityReport {
    /// The largest `rho` for which all three regularity bounds hold.
    pub fn rho(&self) -> f64 {
        self.min_edge_ratio
            .min(self.min_cell_ratio)
            .min(self.min_star_ratio)
    }
}

pub fn assess_quality(mesh: &PolygonalMesh) -> MeshQualityReport {
    let h = mesh.h();
    let mut min_edge_ratio = f64::INFINITY;
    let mut min_cell_ratio = f64::INFINITY;
    let mut star_ratios = Vec::with_capacity(mesh.num_cells());
    let mut convex = Vec::with_capacity(mesh.num_cells());
    let mut degenerate_cells = Vec::new();

    for (k, cell) in mesh.cells().iter().enumerate() {
        for &e in &cell.edges {
            min_edge_ratio = min_edge_ratio.min(mesh.edge(e).length / cell.diameter);
        }
        min_cell_ratio = min_cell_ratio.min(cell.diameter / h);
        let pts = mesh.cell_points(k);
        let radius = kernel_inradius(&pts);
        if radius <= 0.0 || cell.area <= 0.0 {
            degenerate_cells.push(k);
        }
        star_ratios.push(radius.max(0.0) / cell.diameter);
        convex.push(polygon_is_convex(&pts));
    }

    let min_star_ratio = star_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    MeshQualityReport {
        min_edge_ratio,
        min_cell_ratio,
        min_star_ratio,
        all_convex: convex.iter().all(|&c| c),
        star_ratios,
        convex,
        degenerate_cells,
    }
}

/// True when every interior angle of the CCW polygon is at most 180 degrees.
pub fn polygon_is_convex(pts: &[Point2<f64>]) -> bool {
    let n = pts.len();
    (0..n).all(|i| {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let c = pts[(i + 2) % n];
        let u = b - a;
        let v = c - b;
        u.x * v.y - u.y * v.x >= -1e-14 * u.norm() * v.norm()
    })
}

/// Radius of the largest disk contained in the kernel of a CCW polygon.
///
/// The kernel is the intersection of the inner half-planes of all edges,
/// so this is the linear program `max r` subject to
/// `n_i . c + r <= n_i . p_i`. The optimum sits on a vertex of the feasible
/// set, which for a handful of edges we find by enumerating triples of
/// active constraints. For convex cells this is the inradius.
fn kernel_inradius(pts: &[Point2<f64>]) -> f64 {
    let n = pts.len();
    let planes: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let d = pts[(i + 1) % n] - pts[i];
            let len = d.norm();
            let (nx, ny) = (d.y / len, -d.x / len);
            (nx, ny, nx * pts[i].x + ny * pts[i].y)
        })
        .collect();
    let scale = super::polygon_diameter(pts);
    let mut best = 0.0_f64;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = Matrix3::new(
                    planes[i].0, planes[i].1, 1.0,
                    planes[j].0, planes[j].1, 1.0,
                    planes[k].0, planes[k].1, 1.0,
                );
                let rhs = Vector3::new(planes[i].2, planes[j].2, planes[k].2);
                let Some(sol) = m.lu().solve(&rhs) else { continue };
                let (cx, cy, r) = (sol[0], sol[1], sol[2]);
                if !r.is_finite() || r <= best {
                    continue;
                }
                let feasible = planes
                    .iter()
                    .all(|&(nx, ny, d)| nx * cx + ny * cy + r <= d + 1e-12 * scale);
                if feasible {
                    best = r;
                }
            }
        }
    }
    best
}
