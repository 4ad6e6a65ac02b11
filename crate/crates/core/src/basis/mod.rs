//! Scaled monomial bases, exact polygon moments and quadrature rules.

mod moments;
mod quadrature;

pub use moments::exact_cell_moments;
pub use quadrature::{cell_rule, edge_rule, gauss_legendre, triangle_rule, QuadratureError, QuadratureRule};

use nalgebra::{Matrix2, Point2, Vector2};

/// Dimension of the polynomial space of total degree `m` in two variables.
pub const fn poly_dim(m: usize) -> usize {
    (m + 1) * (m + 2) / 2
}

/// Scaled monomials `((x - x_S) / h_S)^beta`, `|beta| <= degree`, in graded
/// lexicographic order: `1, X, Y, X^2, XY, Y^2, X^3, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    center: Point2<f64>,
    scale: f64,
    degree: usize,
    exponents: Vec<(usize, usize)>,
}

impl MonomialBasis {
    pub fn new(center: Point2<f64>, scale: f64, degree: usize) -> Self {
        let mut exponents = Vec::with_capacity(poly_dim(degree));
        for j in 0..=degree {
            for b in 0..=j {
                exponents.push((j - b, b));
            }
        }
        Self {
            center,
            scale,
            degree,
            exponents,
        }
    }

    pub fn center(&self) -> Point2<f64> {
        self.center
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[(usize, usize)] {
        &self.exponents
    }

    /// Index range of the homogeneous monomials of degree `j`.
    pub fn homogeneous_range(&self, j: usize) -> std::ops::Range<usize> {
        let start = if j == 0 { 0 } else { poly_dim(j - 1) };
        start..poly_dim(j)
    }

    /// Scaled local coordinates of `p`.
    pub fn local(&self, p: &Point2<f64>) -> (f64, f64) {
        ((p.x - self.center.x) / self.scale, (p.y - self.center.y) / self.scale)
    }

    pub fn values(&self, p: &Point2<f64>) -> Vec<f64> {
        let (x, y) = self.local(p);
        self.exponents
            .iter()
            .map(|&(a, b)| powi(x, a) * powi(y, b))
            .collect()
    }

    pub fn gradients(&self, p: &Point2<f64>) -> Vec<Vector2<f64>> {
        let (x, y) = self.local(p);
        let s = 1.0 / self.scale;
        self.exponents
            .iter()
            .map(|&(a, b)| {
                let dx = if a > 0 { a as f64 * powi(x, a - 1) * powi(y, b) } else { 0.0 };
                let dy = if b > 0 { b as f64 * powi(x, a) * powi(y, b - 1) } else { 0.0 };
                Vector2::new(dx * s, dy * s)
            })
            .collect()
    }

    pub fn hessians(&self, p: &Point2<f64>) -> Vec<Matrix2<f64>> {
        let (x, y) = self.local(p);
        let s2 = 1.0 / (self.scale * self.scale);
        self.exponents
            .iter()
            .map(|&(a, b)| {
                let af = a as f64;
                let bf = b as f64;
                let dxx = if a > 1 { af * (af - 1.0) * powi(x, a - 2) * powi(y, b) } else { 0.0 };
                let dyy = if b > 1 { bf * (bf - 1.0) * powi(x, a) * powi(y, b - 2) } else { 0.0 };
                let dxy = if a > 0 && b > 0 {
                    af * bf * powi(x, a - 1) * powi(y, b - 1)
                } else {
                    0.0
                };
                Matrix2::new(dxx, dxy, dxy, dyy) * s2
            })
            .collect()
    }

    /// Evaluates the polynomial with the given coefficients.
    pub fn eval_poly(&self, coeffs: &[f64], p: &Point2<f64>) -> f64 {
        self.values(p).iter().zip(coeffs).map(|(v, c)| v * c).sum()
    }

    pub fn eval_poly_gradient(&self, coeffs: &[f64], p: &Point2<f64>) -> Vector2<f64> {
        self.gradients(p)
            .iter()
            .zip(coeffs)
            .fold(Vector2::zeros(), |acc, (g, c)| acc + g * *c)
    }
}

fn powi(x: f64, k: usize) -> f64 {
    x.powi(k as i32)
}
