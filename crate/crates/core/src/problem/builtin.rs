use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};

use super::{
    sample_control_set, CoefficientField, Coefficients, ControlPoint, ControlSet, ControlSpec, ExactSolution,
    HJBProblem, ProblemError,
};
use crate::mesh::Rectangle;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinProblem {
    Example1,
    Example2,
    Example3,
}

impl fmt::Display for BuiltinProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BuiltinProblem::Example1 => "example1",
            BuiltinProblem::Example2 => "example2",
            BuiltinProblem::Example3 => "example3",
        })
    }
}

impl FromStr for BuiltinProblem {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "example1" => Ok(BuiltinProblem::Example1),
            "example2" => Ok(BuiltinProblem::Example2),
            "example3" => Ok(BuiltinProblem::Example3),
            other => Err(ProblemError::UnknownProblem(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinOptions {
    /// Shear-angle samples over `[0, pi/3]` for example 2.
    pub n_theta: usize,
    /// Rotation samples over `[0, 2 pi)` for example 2.
    pub n_phi: usize,
    /// Control grid used to evaluate example 2's `alpha`-independent load
    /// part. `None` reuses the solver's own control grid, which makes the
    /// exact solution solve the sampled problem exactly.
    pub g_reference: Option<(usize, usize)>,
}

impl Default for BuiltinOptions {
    fn default() -> Self {
        Self {
            n_theta: 16,
            n_phi: 16,
            g_reference: None,
        }
    }
}

pub fn make_builtin(name: &str, options: &BuiltinOptions) -> Result<HJBProblem, ProblemError> {
    match name.parse::<BuiltinProblem>()? {
        BuiltinProblem::Example1 => Example1::problem(),
        BuiltinProblem::Example2 => Example2::problem(options),
        BuiltinProblem::Example3 => Example3::problem(),
    }
}

/// `u = sin(k x) sin(k y)`.
#[derive(Debug, Clone, Copy)]
pub struct SineProduct {
    pub k: f64,
}

impl ExactSolution for SineProduct {
    fn value(&self, p: &Point2<f64>) -> f64 {
        (self.k * p.x).sin() * (self.k * p.y).sin()
    }

    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64> {
        let (sx, cx) = (self.k * p.x).sin_cos();
        let (sy, cy) = (self.k * p.y).sin_cos();
        Vector2::new(self.k * cx * sy, self.k * sx * cy)
    }

    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64> {
        let (sx, cx) = (self.k * p.x).sin_cos();
        let (sy, cy) = (self.k * p.y).sin_cos();
        let k2 = self.k * self.k;
        let off = k2 * cx * cy;
        Matrix2::new(-k2 * sx * sy, off, off, -k2 * sx * sy)
    }
}

/// `u = exp(x y) sin(pi x) sin(pi y)`.
#[derive(Debug, Clone, Copy)]
pub struct ExpSine;

impl ExactSolution for ExpSine {
    fn value(&self, p: &Point2<f64>) -> f64 {
        (p.x * p.y).exp() * (PI * p.x).sin() * (PI * p.y).sin()
    }

    fn gradient(&self, p: &Point2<f64>) -> Vector2<f64> {
        let e = (p.x * p.y).exp();
        let (s1, c1) = (PI * p.x).sin_cos();
        let (s2, c2) = (PI * p.y).sin_cos();
        Vector2::new(e * (p.y * s1 + PI * c1) * s2, e * s1 * (p.x * s2 + PI * c2))
    }

    fn hessian(&self, p: &Point2<f64>) -> Matrix2<f64> {
        let (x, y) = (p.x, p.y);
        let e = (x * y).exp();
        let (s1, c1) = (PI * x).sin_cos();
        let (s2, c2) = (PI * y).sin_cos();
        let pi2 = PI * PI;
        let uxx = e * s2 * (y * y * s1 + 2.0 * PI * y * c1 - pi2 * s1);
        let uyy = e * s1 * (x * x * s2 + 2.0 * PI * x * c2 - pi2 * s2);
        let uxy = e * (x * (y * s1 + PI * c1) * s2 + s1 * s2 + (y * s1 + PI * c1) * PI * c2);
        Matrix2::new(uxx, uxy, uxy, uyy)
    }
}

/// Linear problem with `A = [[2,1],[1,2]]`, `b = x`, `c = 3`.
#[derive(Debug, Clone, Copy)]
pub struct Example1;

impl Example1 {
    pub const A: Matrix2<f64> = Matrix2::new(2.0, 1.0, 1.0, 2.0);
    pub const C: f64 = 3.0;
    pub const EXACT: SineProduct = SineProduct { k: PI };

    pub fn problem() -> Result<HJBProblem, ProblemError> {
        HJBProblem::new(
            "example1",
            Rectangle::UNIT,
            1.0,
            9.0 / 20.0,
            true,
            sample_control_set(&ControlSpec::Singleton)?,
            Arc::new(Example1),
            Some(Arc::new(Self::EXACT)),
        )
    }
}

impl CoefficientField for Example1 {
    fn eval(&self, x: &Point2<f64>, _control: usize) -> Coefficients {
        let u = &Self::EXACT;
        let mut c = Coefficients {
            a: Self::A,
            b: x.coords,
            c: Self::C,
            f: 0.0,
        };
        c.f = c.apply(&u.hessian(x), &u.gradient(x), u.value(x));
        c
    }
}

/// Fully nonlinear problem with rotated, sheared diffusions.
#[derive(Debug, Clone)]
pub struct Example2 {
    /// Per control: `A` and `sin^2 theta`.
    controls: Vec<(Matrix2<f64>, f64)>,
    /// Controls over which the load's `alpha`-independent part is
    /// maximized; `None` means the same as `controls`.
    reference: Option<Vec<(Matrix2<f64>, f64)>>,
}

impl Example2 {
    pub const C: f64 = PI * PI;
    pub const THETA_MAX: f64 = PI / 3.0;

    pub fn lambda() -> f64 {
        8.0 * PI * PI / 7.0
    }

    /// `A = sigma sigma^T / 2` with `sigma = R(phi) [[1, sin t], [0, cos t]]`.
    pub fn diffusion(theta: f64, phi: f64) -> Matrix2<f64> {
        let (s, c) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let r = Matrix2::new(cp, -sp, sp, cp);
        let sigma = r * Matrix2::new(1.0, s, 0.0, c);
        sigma * sigma.transpose() * 0.5
    }

    fn tabulate(set: &ControlSet) -> Vec<(Matrix2<f64>, f64)> {
        set.points()
            .iter()
            .map(|p| match *p {
                ControlPoint::Angles { theta, phi } => (Self::diffusion(theta, phi), theta.sin().powi(2)),
                _ => unreachable!("example 2 uses an angle grid"),
            })
            .collect()
    }

    fn grid(n_theta: usize, n_phi: usize) -> Result<ControlSet, ProblemError> {
        sample_control_set(&ControlSpec::AngleGrid {
            n_theta,
            theta_max: Self::THETA_MAX,
            n_phi,
        })
    }

    pub fn new(options: &BuiltinOptions) -> Result<(Self, ControlSet), ProblemError> {
        let set = Self::grid(options.n_theta, options.n_phi)?;
        let reference = match options.g_reference {
            Some((nt, np)) => Some(Self::tabulate(&Self::grid(nt, np)?)),
            None => None,
        };
        Ok((
            Self {
                controls: Self::tabulate(&set),
                reference,
            },
            set,
        ))
    }

    pub fn problem(options: &BuiltinOptions) -> Result<HJBProblem, ProblemError> {
        let (field, set) = Self::new(options)?;
        HJBProblem::new(
            "example2",
            Rectangle::UNIT,
            Self::lambda(),
            1.0 / 7.0,
            true,
            set,
            Arc::new(field),
            Some(Arc::new(ExpSine)),
        )
    }

    fn load_shift(s2: f64) -> f64 {
        3f64.sqrt() * s2 / (PI * PI)
    }

    /// The `alpha`-independent part of the load, chosen so that
    /// `max_alpha (L u - f) = 0`.
    pub fn g(&self, x: &Point2<f64>) -> f64 {
        let h = ExpSine.hessian(x);
        let set = self.reference.as_ref().unwrap_or(&self.controls);
        let best = set
            .iter()
            .map(|(a, s2)| a.component_mul(&h).sum() - Self::load_shift(*s2))
            .fold(f64::NEG_INFINITY, f64::max);
        best - Self::C * ExpSine.value(x)
    }
}

impl CoefficientField for Example2 {
    fn eval(&self, x: &Point2<f64>, control: usize) -> Coefficients {
        let (a, s2) = self.controls[control];
        Coefficients {
            a,
            b: Vector2::zeros(),
            c: Self::C,
            f: Self::load_shift(s2) + self.g(x),
        }
    }

    fn eval_all(&self, x: &Point2<f64>, out: &mut [Coefficients]) {
        let g = self.g(x);
        for (o, (a, s2)) in out.iter_mut().zip(&self.controls) {
            *o = Coefficients {
                a: *a,
                b: Vector2::zeros(),
                c: Self::C,
                f: Self::load_shift(*s2) + g,
            };
        }
    }
}

/// Two controls with coefficients that jump across the axes.
#[derive(Debug, Clone, Copy)]
pub struct Example3;

impl Example3 {
    pub const EXACT: SineProduct = SineProduct { k: 1.0 };

    /// `sign(x) sign(y)` with `sign(0) = +1`.
    pub fn quadrant_sign(x: &Point2<f64>) -> f64 {
        let s = |v: f64| if v < 0.0 { -1.0 } else { 1.0 };
        s(x.x) * s(x.y)
    }

    pub fn diffusion(x: &Point2<f64>, control: usize) -> Matrix2<f64> {
        let s = Self::quadrant_sign(x);
        match control {
            0 => Matrix2::new(2.0, 0.5, 0.5, 1.5) + Matrix2::new(1.0, 0.5, 0.5, 0.5) * s,
            _ => Matrix2::new(1.5, 0.5, 0.5, 2.0) + Matrix2::new(0.5, 0.5, 0.5, 1.0) * s,
        }
    }

    pub fn problem() -> Result<HJBProblem, ProblemError> {
        HJBProblem::new(
            "example3",
            Rectangle {
                x0: -PI,
                y0: -PI,
                x1: PI,
                y1: PI,
            },
            1.0,
            1.0 / 6.0,
            true,
            sample_control_set(&ControlSpec::List(vec![1, 2]))?,
            Arc::new(Example3),
            Some(Arc::new(Self::EXACT)),
        )
    }
}

impl CoefficientField for Example3 {
    fn eval(&self, x: &Point2<f64>, control: usize) -> Coefficients {
        let u = &Self::EXACT;
        let mut c = Coefficients {
            a: Self::diffusion(x, control),
            b: Vector2::new(1.0, 0.0),
            c: 1.0,
            f: 0.0,
        };
        c.f = c.apply(&u.hessian(x), &u.gradient(x), u.value(x));
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{cordes_check, cordes_samples, gamma};

    fn fd_check(u: &dyn ExactSolution, p: Point2<f64>) {
        let e = 1e-5;
        let dx = Vector2::new(e, 0.0);
        let dy = Vector2::new(0.0, e);
        let g = u.gradient(&p);
        assert!((g.x - (u.value(&(p + dx)) - u.value(&(p - dx))) / (2.0 * e)).abs() < 1e-8);
        assert!((g.y - (u.value(&(p + dy)) - u.value(&(p - dy))) / (2.0 * e)).abs() < 1e-8);
        let h = u.hessian(&p);
        let hx = (u.gradient(&(p + dx)) - u.gradient(&(p - dx))) / (2.0 * e);
        let hy = (u.gradient(&(p + dy)) - u.gradient(&(p - dy))) / (2.0 * e);
        assert!((h.column(0) - hx).norm() < 1e-7);
        assert!((h.column(1) - hy).norm() < 1e-7);
    }

    #[test]
    fn exact_derivatives() {
        for p in [Point2::new(0.3, 0.7), Point2::new(0.91, 0.12)] {
            fd_check(&ExpSine, p);
            fd_check(&Example1::EXACT, p);
            fd_check(&Example3::EXACT, p);
        }
    }

    #[test]
    fn example1_gamma_at_origin() {
        let p = make_builtin("example1", &BuiltinOptions::default()).unwrap();
        assert_eq!(p.num_controls(), 1);
        let g = gamma(&p, &Point2::origin(), 0).unwrap();
        assert!((g - 7.0 / 19.0).abs() < 1e-15);
        let g1 = gamma(&p, &Point2::new(1.0, 1.0), 0).unwrap();
        assert!((g1 - 7.0 / 20.0).abs() < 1e-15);
    }

    #[test]
    fn example2_diffusion_invariants() {
        for theta in [0.0, 0.4, PI / 3.0] {
            for phi in [0.0, 1.0, 4.0] {
                let a = Example2::diffusion(theta, phi);
                assert!((a.trace() - 1.0).abs() < 1e-14);
                let f2 = a.component_mul(&a).sum();
                assert!((f2 - (1.0 + theta.sin().powi(2)) / 2.0).abs() < 1e-14);
                assert_eq!(a[(0, 1)], a[(1, 0)]);
            }
        }
        let p = make_builtin("example2", &BuiltinOptions::default()).unwrap();
        assert_eq!(p.num_controls(), 256);
        // theta = 0 is control 0: A = I/2
        let g = gamma(&p, &Point2::new(0.2, 0.2), 0).unwrap();
        assert!((g - 120.0 / 81.0).abs() < 1e-13);
    }

    #[test]
    fn example2_residual_vanishes_on_own_grid() {
        let p = make_builtin("example2", &BuiltinOptions { n_theta: 5, n_phi: 7, g_reference: None }).unwrap();
        let u = ExpSine;
        let mut buf = vec![Coefficients::default(); p.num_controls()];
        for x in cordes_samples(&p.domain, 7) {
            p.coefficients_all(&x, &mut buf);
            let r = buf
                .iter()
                .map(|c| c.apply(&u.hessian(&x), &u.gradient(&x), u.value(&x)) - c.f)
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(r.abs() < 1e-12, "{r}");
            for (k, c) in buf.iter().enumerate() {
                assert_eq!(*c, p.coefficients(&x, k));
            }
        }
    }

    #[test]
    fn example2_g_approaches_closed_form() {
        // Over a continuum of rotations, max_phi A:H = ((1+s) m1 + (1-s) m2)/2
        // with m1 >= m2 the eigenvalues of H; the remaining concave
        // quadratic in s is maximized in closed form.
        let fine = Example2::new(&BuiltinOptions {
            n_theta: 2,
            n_phi: 2,
            g_reference: Some((401, 720)),
        })
        .unwrap()
        .0;
        let c = 3f64.sqrt() / (PI * PI);
        for x in [Point2::new(0.3, 0.6), Point2::new(0.8, 0.25)] {
            let h = ExpSine.hessian(&x);
            let e = h.symmetric_eigenvalues();
            let (m1, m2) = (e.max(), e.min());
            let s = ((m1 - m2) / (4.0 * c)).clamp(0.0, 3f64.sqrt() / 2.0);
            let best = 0.5 * (m1 + m2) + 0.5 * s * (m1 - m2) - c * s * s;
            let g = best - PI * PI * ExpSine.value(&x);
            assert!((fine.g(&x) - g).abs() < 1e-3 * (1.0 + g.abs()), "{} vs {g}", fine.g(&x));
        }
    }

    #[test]
    fn example3_coefficients() {
        let s = Example3::diffusion(&Point2::new(0.0, 0.0), 0);
        assert_eq!(s, Matrix2::new(3.0, 1.0, 1.0, 2.0));
        let n = Example3::diffusion(&Point2::new(-1.0, 0.5), 1);
        assert_eq!(n, Matrix2::identity());
        let p = make_builtin("example3", &BuiltinOptions::default()).unwrap();
        let u = Example3::EXACT;
        for x in cordes_samples(&p.domain, 8) {
            let r = (0..2)
                .map(|k| {
                    let c = p.coefficients(&x, k);
                    c.apply(&u.hessian(&x), &u.gradient(&x), u.value(&x)) - c.f
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn cordes_reports() {
        let opts = BuiltinOptions::default();
        let p1 = make_builtin("example1", &opts).unwrap();
        let r1 = cordes_check(&p1, &cordes_samples(&p1.domain, 16));
        assert!((r1.sup_ratio - 20.0 / 49.0).abs() < 1e-14);
        assert!((r1.implied_epsilon - 9.0 / 20.0).abs() < 1e-12);
        assert!(r1.pass);

        let p2 = make_builtin("example2", &opts).unwrap();
        let r2 = cordes_check(&p2, &cordes_samples(&p2.domain, 4));
        assert!((r2.implied_epsilon - 1.0 / 7.0).abs() < 1e-10);
        assert!(r2.pass);

        let p3 = make_builtin("example3", &opts).unwrap();
        let r3 = cordes_check(&p3, &cordes_samples(&p3.domain, 16));
        assert!((r3.sup_ratio - 11.0 / 24.0).abs() < 1e-14);
        assert!(r3.pass);
        assert!(r3.implied_epsilon > 1.0 / 6.0);

        assert!(matches!(make_builtin("example9", &opts), Err(ProblemError::UnknownProblem(_))));
    }
}
