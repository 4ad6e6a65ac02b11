use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{signed_area, MeshError, PolygonalMesh};

/// Structured mesh families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshKind {
    /// Squares split along the diagonal through their lower-left corner.
    Triangle,
    Square,
    /// Honeycomb clipped to the domain; boundary cells become quads/pentagons.
    Hexagon,
    /// Square grid with randomly displaced interior vertices.
    #[serde(alias = "distorted-quad")]
    DistortedQuad,
}

impl MeshKind {
    pub fn name(self) -> &'static str {
        match self {
            MeshKind::Triangle => "triangle",
            MeshKind::Square => "square",
            MeshKind::Hexagon => "hexagon",
            MeshKind::DistortedQuad => "distorted_quad",
        }
    }
}

impl fmt::Display for MeshKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "triangle" => Ok(MeshKind::Triangle),
            "square" => Ok(MeshKind::Square),
            "hexagon" => Ok(MeshKind::Hexagon),
            "distorted_quad" | "distorted-quad" => Ok(MeshKind::DistortedQuad),
            other => Err(format!(
                "unknown mesh kind `{other}` (expected triangle, square, hexagon or distorted_quad)"
            )),
        }
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rectangle {
    pub const UNIT: Rectangle = Rectangle {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

/// Generates a structured mesh with `n` subdivisions along the x side.
///
/// The triangle, square and distorted families use an `n x n` grid. The
/// hexagonal family places `n` hexagons across and chooses the row count
/// so cells stay close to regular.
pub fn generate_structured(
    kind: MeshKind,
    n: usize,
    domain: Rectangle,
    seed: u64,
) -> Result<PolygonalMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::Generator("n must be at least 1".into()));
    }
    let finite = [domain.x0, domain.x1, domain.y0, domain.y1]
        .iter()
        .all(|v| v.is_finite());
    if !finite || domain.width() <= 0.0 || domain.height() <= 0.0 {
        return Err(MeshError::Generator(format!(
            "domain [{}, {}] x [{}, {}] is degenerate or inverted",
            domain.x0, domain.x1, domain.y0, domain.y1
        )));
    }
    match kind {
        MeshKind::Triangle => {
            let (pts, quads) = grid(n, domain);
            let tris = quads
                .into_iter()
                .flat_map(|[a, b, c, d]| [vec![a, b, c], vec![a, c, d]])
                .collect();
            PolygonalMesh::new(pts, tris)
        }
        MeshKind::Square => {
            let (pts, quads) = grid(n, domain);
            PolygonalMesh::new(pts, quads.into_iter().map(|q| q.to_vec()).collect())
        }
        MeshKind::DistortedQuad => {
            let (mut pts, quads) = grid(n, domain);
            let side = (domain.width() / n as f64).min(domain.height() / n as f64);
            let radius = 0.2 * side;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for j in 1..n {
                for i in 1..n {
                    let r = radius * rng.gen::<f64>().sqrt();
                    let phi = std::f64::consts::TAU * rng.gen::<f64>();
                    let p = &mut pts[j * (n + 1) + i];
                    p.x += r * phi.cos();
                    p.y += r * phi.sin();
                }
            }
            PolygonalMesh::new(pts, quads.into_iter().map(|q| q.to_vec()).collect())
        }
        MeshKind::Hexagon => hexagonal(n, domain),
    }
}

/// Vertices of an `(n+1) x (n+1)` grid and its CCW quads.
fn grid(n: usize, d: Rectangle) -> (Vec<Point2<f64>>, Vec<[usize; 4]>) {
    let mut pts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            pts.push(Point2::new(
                lerp(d.x0, d.x1, i, n),
                lerp(d.y0, d.y1, j, n),
            ));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut quads = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            quads.push([id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    (pts, quads)
}

// Exact endpoints, so boundary vertices sit on the domain boundary.
fn lerp(a: f64, b: f64, i: usize, n: usize) -> f64 {
    if i == n {
        b
    } else {
        a + (b - a) * (i as f64 / n as f64)
    }
}

/// Pointy-top honeycomb. Even rows have centres on the lines `x = x0 + i w`,
/// odd rows are offset by `w / 2`, and rows are spaced so that both the
/// bottom and top boundaries pass through row centres. Clipping then cuts
/// boundary hexagons through vertices or edge midpoints only, never
/// producing slivers.
fn hexagonal(n: usize, d: Rectangle) -> Result<PolygonalMesh, MeshError> {
    let w = d.width() / n as f64;
    let rows = ((d.height() / d.width()) * n as f64 * 2.0 / 3f64.sqrt())
        .round()
        .max(1.0) as usize;
    let r = 2.0 * d.height() / (3.0 * rows as f64);

    let mut polygons: Vec<Vec<Point2<f64>>> = Vec::new();
    for j in 0..=rows {
        let cy = if j == rows {
            d.y1
        } else {
            d.y0 + 1.5 * r * j as f64
        };
        let (start, offset) = if j % 2 == 0 { (0i64, 0.0) } else { (-1i64, 0.5) };
        for i in start..=(n as i64) {
            let cx = d.x0 + (i as f64 + offset) * w;
            let hex = [
                Point2::new(cx, cy - r),
                Point2::new(cx + 0.5 * w, cy - 0.5 * r),
                Point2::new(cx + 0.5 * w, cy + 0.5 * r),
                Point2::new(cx, cy + r),
                Point2::new(cx - 0.5 * w, cy + 0.5 * r),
                Point2::new(cx - 0.5 * w, cy - 0.5 * r),
            ];
            let clipped = clip_to_rectangle(&hex, d);
            if clipped.len() >= 3 && signed_area(&clipped) > 1e-12 * w * r {
                polygons.push(clipped);
            }
        }
    }

    let scale = d.width().max(d.height());
    let key = |p: &Point2<f64>| {
        (
            ((p.x - d.x0) / scale * 1e9).round() as i64,
            ((p.y - d.y0) / scale * 1e9).round() as i64,
        )
    };
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut pts: Vec<Point2<f64>> = Vec::new();
    let mut cells = Vec::with_capacity(polygons.len());
    for poly in &polygons {
        let mut cell: Vec<usize> = Vec::with_capacity(poly.len());
        for p in poly {
            let id = *index.entry(key(p)).or_insert_with(|| {
                pts.push(*p);
                pts.len() - 1
            });
            if cell.last() != Some(&id) && cell.first() != Some(&id) {
                cell.push(id);
            }
        }
        cells.push(cell);
    }
    PolygonalMesh::new(pts, cells)
}

/// Sutherland–Hodgman clipping of a convex polygon against a rectangle.
fn clip_to_rectangle(poly: &[Point2<f64>], d: Rectangle) -> Vec<Point2<f64>> {
    // (axis, bound, keep_greater)
    let planes = [(0, d.x0, true), (0, d.x1, false), (1, d.y0, true), (1, d.y1, false)];
    let mut out: Vec<Point2<f64>> = poly.to_vec();
    for &(axis, bound, greater) in &planes {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Point2<f64>| {
            if greater {
                p[axis] >= bound
            } else {
                p[axis] <= bound
            }
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (bound - prev[axis]) / (cur[axis] - prev[axis]);
                let mut q = prev + (cur - prev) * t;
                q[axis] = bound;
                out.push(q);
            }
            if ci {
                out.push(cur);
            }
        }
        // Drop consecutive duplicates created when a vertex lies on the bound.
        out.dedup_by(|a, b| (*a - *b).norm() < 1e-14);
        while out.len() > 1 && (out[0] - out[out.len() - 1]).norm() < 1e-14 {
            out.pop();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_square() {
        let m = generate_structured(MeshKind::Square, 1, Rectangle::UNIT, 0).unwrap();
        assert_eq!((m.num_cells(), m.num_vertices(), m.num_edges()), (1, 4, 4));
    }

    #[test]
    fn triangle_counts_follow_euler() {
        let m = generate_structured(MeshKind::Triangle, 2, Rectangle::UNIT, 0).unwrap();
        assert_eq!((m.num_cells(), m.num_vertices(), m.num_edges()), (8, 9, 16));
        assert_eq!(m.num_edges(), m.num_vertices() + m.num_cells() - 1);
    }

    #[test]
    fn distorted_quad_keeps_boundary_and_bound() {
        let base = generate_structured(MeshKind::Square, 2, Rectangle::UNIT, 0).unwrap();
        let m = generate_structured(MeshKind::DistortedQuad, 2, Rectangle::UNIT, 7).unwrap();
        assert_eq!((m.num_cells(), m.num_vertices(), m.num_edges()), (4, 9, 12));
        for (v, (p, q)) in m.vertices().iter().zip(base.vertices()).enumerate() {
            let shift = (p - q).norm();
            if m.is_boundary_vertex(v) {
                assert_eq!(shift, 0.0);
            } else {
                assert!(shift <= 0.2 * 0.5 + 1e-15);
            }
        }
        let again = generate_structured(MeshKind::DistortedQuad, 2, Rectangle::UNIT, 7).unwrap();
        assert_eq!(m, again);
        let other = generate_structured(MeshKind::DistortedQuad, 2, Rectangle::UNIT, 8).unwrap();
        assert_ne!(m.vertices(), other.vertices());
    }

    #[test]
    fn hexagon_mesh_tiles_domain() {
        for n in [1, 2, 3, 5, 8] {
            let m = generate_structured(MeshKind::Hexagon, n, Rectangle::UNIT, 0).unwrap();
            let area: f64 = m.cells().iter().map(|c| c.area).sum();
            assert!((area - 1.0).abs() < 1e-12, "n={n} area={area}");
            assert_eq!(m.euler_characteristic(), 1);
            for c in m.cells() {
                assert!((3..=6).contains(&c.num_vertices()));
            }
            for (v, p) in m.vertices().iter().enumerate() {
                let on_bd = p.x.abs() < 1e-14
                    || (p.x - 1.0).abs() < 1e-14
                    || p.y.abs() < 1e-14
                    || (p.y - 1.0).abs() < 1e-14;
                assert_eq!(on_bd, m.is_boundary_vertex(v), "n={n} vertex {v} {p:?}");
            }
        }
        let m = generate_structured(MeshKind::Hexagon, 4, Rectangle::UNIT, 0).unwrap();
        assert!(m.cells().iter().any(|c| c.num_vertices() == 6));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(generate_structured(MeshKind::Square, 0, Rectangle::UNIT, 0).is_err());
        let inverted = Rectangle::new(1.0, 0.0, 0.0, 1.0);
        assert!(generate_structured(MeshKind::Triangle, 2, inverted, 0).is_err());
    }

    #[test]
    fn non_square_domain() {
        let d = Rectangle::new(-std::f64::consts::PI, -1.0, std::f64::consts::PI, 2.0);
        for kind in [MeshKind::Triangle, MeshKind::Square, MeshKind::Hexagon, MeshKind::DistortedQuad] {
            let m = generate_structured(kind, 4, d, 3).unwrap();
            let area: f64 = m.cells().iter().map(|c| c.area).sum();
            assert!((area - d.width() * d.height()).abs() < 1e-11, "{kind}");
        }
    }
}
