//! HJB problems over sampled control sets, the Cordes scaling `gamma`
//! and the Cordes condition checker.

mod builtin;
mod controls;

pub use builtin::{make_builtin, BuiltinOptions, BuiltinProblem, Example1, Example2, Example3};
pub use controls::{sample_control_set, ControlPoint, ControlSet, ControlSpec};

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};
use thiserror::Error;

use crate::mesh::Rectangle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown problem `{0}` (expected example1, example2 or example3)")]
    UnknownProblem(String),
    #[error("control set is empty")]
    EmptyControlSet,
    #[error("invalid control specification: {0}")]
    InvalidControlSpec(String),
    #[error("lambda must be positive when lower-order terms are present (got {0})")]
    LambdaRequired(f64),
    #[error("lambda must be finite and non-negative (got {0})")]
    InvalidLambda(f64),
    #[error("diffusion matrix vanishes at ({x}, {y}) for control {control}")]
    ZeroDiffusion { x: f64, y: f64, control: usize },
    #[error("problem `{0}` has no exact solution")]
    MissingExactSolution(String),
}

/// Coefficients of `A:D2u + b.grad u - c u - f` at one point and control.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
    pub c: f64,
    pub f: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            a: Matrix2::zeros(),
            b: Vector2::zeros(),
            c: 0.0,
            f: 0.0,
        }
    }
}

impl Coefficients {
    /// `A:H + b.g - c s`.
    pub fn apply(&self, hess: &Matrix2<f64>, grad: &Vector2<f64>, value: f64) -> f64 {
        self.a.component_mul(hess).sum() + self.b.dot(grad) - self.c * value
    }
}

/// Coefficient family indexed by control.
pub trait CoefficientField: Send + Sync {
    fn eval(&self, x: &Point2<f64>, control: usize) -> Coefficients;

    /// Evaluates every control at once; `out.len()` is the control count.
    fn eval_all(&self, x: &Point2<f64>, out: &mut [Coefficients]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.eval(x, i);
        }
    }
}

/// Analytic solution with hand-coded derivatives.
pub trait ExactSolution: Send + Sync {
    fn value(&self, x: &Point2<f64>) -> f64;
    fn gradient(&self, x: &Point2<f64>) -> Vector2<f64>;
    fn hessian(&self, x: &Point2<f64>) -> Matrix2<f64>;
}

/// Which Cordes condition applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CordesBranch {
    /// Lower-order terms present; scaled with `lambda > 0`.
    LowerOrder,
    /// Pure second-order operator.
    PrincipalOnly,
}

#[derive(Clone)]
pub struct HJBProblem {
    pub name: String,
    pub domain: Rectangle,
    pub lambda: f64,
    /// The epsilon the problem claims to satisfy.
    pub declared_epsilon: f64,
    pub has_lower_order: bool,
    controls: ControlSet,
    coefficients: Arc<dyn CoefficientField>,
    exact: Option<Arc<dyn ExactSolution>>,
}

impl fmt::Debug for HJBProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HJBProblem")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("lambda", &self.lambda)
            .field("declared_epsilon", &self.declared_epsilon)
            .field("has_lower_order", &self.has_lower_order)
            .field("controls", &self.controls.len())
            .finish()
    }
}

impl HJBProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        domain: Rectangle,
        lambda: f64,
        declared_epsilon: f64,
        has_lower_order: bool,
        controls: ControlSet,
        coefficients: Arc<dyn CoefficientField>,
        exact: Option<Arc<dyn ExactSolution>>,
    ) -> Result<Self, ProblemError> {
        let p = Self {
            name: name.into(),
            domain,
            lambda,
            declared_epsilon,
            has_lower_order,
            controls,
            coefficients,
            exact,
        };
        p.validate_lambda(lambda)?;
        if p.controls.is_empty() {
            return Err(ProblemError::EmptyControlSet);
        }
        Ok(p)
    }

    fn validate_lambda(&self, lambda: f64) -> Result<(), ProblemError> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(ProblemError::InvalidLambda(lambda));
        }
        if self.has_lower_order && lambda <= 0.0 {
            return Err(ProblemError::LambdaRequired(lambda));
        }
        Ok(())
    }

    /// Replaces lambda, e.g. from a command-line override.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self, ProblemError> {
        self.validate_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn branch(&self) -> CordesBranch {
        if self.has_lower_order {
            CordesBranch::LowerOrder
        } else {
            CordesBranch::PrincipalOnly
        }
    }

    pub fn controls(&self) -> &ControlSet {
        &self.controls
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn coefficients(&self, x: &Point2<f64>, control: usize) -> Coefficients {
        self.coefficients.eval(x, control)
    }

    pub fn coefficients_all(&self, x: &Point2<f64>, out: &mut [Coefficients]) {
        self.coefficients.eval_all(x, out)
    }

    pub fn exact(&self) -> Option<&dyn ExactSolution> {
        self.exact.as_deref()
    }

    pub fn exact_or_err(&self) -> Result<&dyn ExactSolution, ProblemError> {
        self.exact().ok_or_else(|| ProblemError::MissingExactSolution(self.name.clone()))
    }

    /// `gamma` for already evaluated coefficients.
    pub fn gamma_of(&self, c: &Coefficients) -> f64 {
        gamma_value(c, self.lambda, self.branch())
    }

    /// Cordes ratio for already evaluated coefficients.
    pub fn cordes_ratio_of(&self, c: &Coefficients) -> f64 {
        cordes_ratio(c, self.lambda, self.branch())
    }
}

fn frob2(a: &Matrix2<f64>) -> f64 {
    a.component_mul(a).sum()
}

fn gamma_value(c: &Coefficients, lambda: f64, branch: CordesBranch) -> f64 {
    match branch {
        CordesBranch::LowerOrder => {
            let cl = c.c / lambda;
            (c.a.trace() + cl) / (frob2(&c.a) + c.b.norm_squared() / (2.0 * lambda) + cl * cl)
        }
        CordesBranch::PrincipalOnly => c.a.trace() / frob2(&c.a),
    }
}

fn cordes_ratio(c: &Coefficients, lambda: f64, branch: CordesBranch) -> f64 {
    match branch {
        CordesBranch::LowerOrder => {
            let cl = c.c / lambda;
            let t = c.a.trace() + cl;
            (frob2(&c.a) + c.b.norm_squared() / (2.0 * lambda) + cl * cl) / (t * t)
        }
        CordesBranch::PrincipalOnly => frob2(&c.a) / (c.a.trace() * c.a.trace()),
    }
}

/// The Cordes scaling `gamma^alpha(x)`.
pub fn gamma(problem: &HJBProblem, x: &Point2<f64>, control: usize) -> Result<f64, ProblemError> {
    let c = problem.coefficients(x, control);
    if frob2(&c.a) == 0.0 {
        return Err(ProblemError::ZeroDiffusion {
            x: x.x,
            y: x.y,
            control,
        });
    }
    if problem.has_lower_order && problem.lambda <= 0.0 {
        return Err(ProblemError::LambdaRequired(problem.lambda));
    }
    Ok(problem.gamma_of(&c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CordesReport {
    pub branch: CordesBranch,
    pub sup_ratio: f64,
    pub implied_epsilon: f64,
    pub declared_epsilon: f64,
    pub pass: bool,
    /// Smallest and largest eigenvalue of `A` over all samples.
    pub rho1: f64,
    pub rho2: f64,
    pub worst_point: Point2<f64>,
    pub worst_control: usize,
    pub samples: usize,
}

impl CordesReport {
    /// Difference between the implied and the declared epsilon, when it
    /// exceeds `1e-10`.
    pub fn discrepancy(&self) -> Option<f64> {
        let d = self.implied_epsilon - self.declared_epsilon;
        (d.abs() > 1e-10).then_some(d)
    }
}

impl fmt::Display for CordesReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let bound = match self.branch {
            CordesBranch::LowerOrder => "1/(2+eps)",
            CordesBranch::PrincipalOnly => "1/(1+eps)",
        };
        writeln!(f, "sup ratio:        {:.12} (bound {bound})", self.sup_ratio)?;
        writeln!(
            f,
            "  attained at ({:.6}, {:.6}), control {}",
            self.worst_point.x, self.worst_point.y, self.worst_control
        )?;
        writeln!(f, "implied epsilon:  {:.12}", self.implied_epsilon)?;
        writeln!(f, "declared epsilon: {:.12}", self.declared_epsilon)?;
        writeln!(f, "ellipticity:      [{:.6}, {:.6}]", self.rho1, self.rho2)?;
        writeln!(f, "samples:          {}", self.samples)?;
        if let Some(d) = self.discrepancy() {
            writeln!(f, "note: implied epsilon differs from the declared value by {d:+.3e}")?;
        }
        write!(f, "result:           {}", if self.pass { "pass" } else { "FAIL" })
    }
}

/// Tensor grid of `(n + 1)^2` points covering the closed domain.
pub fn cordes_samples(domain: &Rectangle, n: usize) -> Vec<Point2<f64>> {
    let n = n.max(1);
    let mut pts = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            pts.push(Point2::new(
                domain.x0 + domain.width() * i as f64 / n as f64,
                domain.y0 + domain.height() * j as f64 / n as f64,
            ));
        }
    }
    pts
}

/// Evaluates the Cordes ratio at every sample and control.
pub fn cordes_check(problem: &HJBProblem, samples: &[Point2<f64>]) -> CordesReport {
    let branch = problem.branch();
    let mut buf = vec![Coefficients::default(); problem.num_controls()];
    let mut sup = f64::NEG_INFINITY;
    let mut worst_point = Point2::origin();
    let mut worst_control = 0;
    let mut rho1 = f64::INFINITY;
    let mut rho2 = f64::NEG_INFINITY;
    for x in samples {
        problem.coefficients_all(x, &mut buf);
        for (k, c) in buf.iter().enumerate() {
            let r = cordes_ratio(c, problem.lambda, branch);
            if r > sup {
                sup = r;
                worst_point = *x;
                worst_control = k;
            }
            let eig = c.a.symmetric_eigenvalues();
            rho1 = rho1.min(eig.min());
            rho2 = rho2.max(eig.max());
        }
    }
    let (implied, bound) = match branch {
        CordesBranch::LowerOrder => (1.0 / sup - 2.0, 1.0 / (2.0 + problem.declared_epsilon)),
        CordesBranch::PrincipalOnly => (1.0 / sup - 1.0, 1.0 / (1.0 + problem.declared_epsilon)),
    };
    CordesReport {
        branch,
        sup_ratio: sup,
        implied_epsilon: implied,
        declared_epsilon: problem.declared_epsilon,
        pass: sup <= bound + 1e-12,
        rho1,
        rho2,
        worst_point,
        worst_control,
        samples: samples.len(),
    }
}
