use nalgebra::Point2;

use super::{gauss_legendre, MonomialBasis};

/// Exact integrals of every basis monomial of degree `<= degree` over the
/// polygon with CCW vertices `pts`.
///
/// Uses `X^a Y^b = d/dx [h X^(a+1) Y^b / (a+1)]` and the divergence
/// theorem, so only edge integrals of polynomials of degree `a + b + 1`
/// remain; those are exact under Gauss–Legendre.
pub fn exact_cell_moments(pts: &[Point2<f64>], basis: &MonomialBasis, degree: usize) -> Vec<f64> {
    let full = MonomialBasis::new(basis.center(), basis.scale(), degree);
    let h = basis.scale();
    let (gx, gw) = gauss_legendre(degree / 2 + 1);
    let mut out = vec![0.0; full.dim()];
    let n = pts.len();
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let d = b - a;
        // n_x ds = dy along a CCW boundary.
        let nx_len = d.y;
        if nx_len == 0.0 {
            continue;
        }
        for (t, w) in gx.iter().zip(&gw) {
            let p = a + d * (0.5 * (t + 1.0));
            let (x, y) = full.local(&p);
            for (k, &(ea, eb)) in full.exponents().iter().enumerate() {
                let f = h * x.powi(ea as i32 + 1) * y.powi(eb as i32) / (ea as f64 + 1.0);
                out[k] += 0.5 * w * f * nx_len;
            }
        }
    }
    out
}
