use nalgebra::Point2;
use thiserror::Error;

use crate::mesh::signed_area;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
    #[error("cell is not star-shaped with respect to its centroid; fix or split the cell")]
    NotStarShaped,
}

/// Points and positive weights; weights sum to the measure of the region.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
    /// Polynomials up to this total degree are integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn integrate<F: FnMut(&Point2<f64>) -> f64>(&self, mut f: F) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, exact to degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss–Legendre rule on the segment `[a, b]`, exact to `degree`.
pub fn edge_rule(a: Point2<f64>, b: Point2<f64>, degree: usize) -> QuadratureRule {
    let n = degree / 2 + 1;
    let (x, w) = gauss_legendre(n);
    let len = (b - a).norm();
    QuadratureRule {
        points: x.iter().map(|t| a + (b - a) * (0.5 * (t + 1.0))).collect(),
        weights: w.iter().map(|wi| 0.5 * len * wi).collect(),
        degree: 2 * n - 1,
    }
}

/// Collapsed (conical product) Gauss rule on a triangle, exact to `degree`.
pub fn triangle_rule(p0: Point2<f64>, p1: Point2<f64>, p2: Point2<f64>, degree: usize) -> QuadratureRule {
    let mut rule = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
        degree,
    };
    push_triangle(&mut rule, p0, p1, p2, degree);
    rule
}

fn push_triangle(rule: &mut QuadratureRule, p0: Point2<f64>, p1: Point2<f64>, p2: Point2<f64>, degree: usize) {
    // Map (u, v) in [0,1]^2 to p0 + u (p1 - p0) + u v (p2 - p1); the
    // Jacobian carries one extra power of u.
    let nu = (degree + 2).div_ceil(2);
    let nv = (degree + 1).div_ceil(2);
    let (xu, wu) = gauss_legendre(nu);
    let (xv, wv) = gauss_legendre(nv);
    let two_area = ((p1 - p0).x * (p2 - p0).y - (p1 - p0).y * (p2 - p0).x).abs();
    for (u, wui) in xu.iter().zip(&wu) {
        let u = 0.5 * (u + 1.0);
        for (v, wvj) in xv.iter().zip(&wv) {
            let v = 0.5 * (v + 1.0);
            rule.points.push(p0 + (p1 - p0) * u + (p2 - p1) * (u * v));
            rule.weights.push(0.25 * wui * wvj * u * two_area);
        }
    }
}

/// Centroid-fan rule on a polygon: every fan triangle gets a rule exact to
/// `degree`.
pub fn cell_rule(pts: &[Point2<f64>], degree: usize) -> Result<QuadratureRule, QuadratureError> {
    if degree == 0 {
        return Err(QuadratureError::ZeroOrder);
    }
    let area = signed_area(pts);
    let c = crate::mesh::polygon_centroid(pts, area);
    let n = pts.len();
    let mut rule = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
        degree,
    };
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let tri = signed_area(&[c, a, b]);
        if tri <= 1e-14 * area.abs() {
            return Err(QuadratureError::NotStarShaped);
        }
        push_triangle(&mut rule, c, a, b, degree);
    }
    Ok(rule)
}
