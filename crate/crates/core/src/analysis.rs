//! Error norms, convergence rates and the refinement study driver.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::{Matrix2, Point2, Vector2};
use thiserror::Error;

use crate::assembly::{AssemblyError, LoadRule, Discretization, DEFAULT_QUAD_ORDER};
use crate::basis::cell_rule;
use crate::element::Family;
use crate::mesh::{generate_structured, MeshError, MeshKind};
use crate::newton::{solve_hjb, NewtonConfig, NewtonError};
use crate::problem::{ExactSolution, HJBProblem, ProblemError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("error sequence contains a non-positive value at position {0}")]
    NonPositiveError(usize),
    #[error("mesh sizes must be positive and strictly decreasing (position {0})")]
    BadMeshSizes(usize),
    #[error("error and mesh-size sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("refinement 1/h = {level}: {source}")]
    Mesh {
        level: usize,
        #[source]
        source: MeshError,
    },
    #[error("refinement 1/h = {level}: {source}")]
    Assembly {
        level: usize,
        #[source]
        source: AssemblyError,
    },
    #[error("refinement 1/h = {level}: {source}")]
    Newton {
        level: usize,
        #[source]
        source: NewtonError,
    },
    #[error("refinement 1/h = {level}: Newton did not converge in {iterations} iterations (last increment {err:e})")]
    NotConverged { level: usize, iterations: usize, err: f64 },
    #[error("no refinement levels given")]
    NoLevels,
}

/// `E0`, `E1`, `E2`: L2 errors of the value, gradient and Hessian
/// projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
}

pub fn error_norms(disc: &Discretization, u: &[f64], exact: &dyn ExactSolution) -> ErrorNorms {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (k, el) in disc.elements.iter().enumerate() {
        let ul = disc.local(k, u);
        let hess = el.mean_hessian(&ul);
        let val = &el.p_h * &ul;
        let grad = &el.p1_grad * &ul;
        for (x, w) in disc.rules[k].points.iter().zip(&disc.rules[k].weights) {
            let dh = exact.hessian(x) - hess;
            s2 += w * dh.component_mul(&dh).sum();
            let m = el.basis.values(x);
            let gx = grad[0] * m[0] + grad[1] * m[1] + grad[2] * m[2];
            let gy = grad[3] * m[0] + grad[4] * m[1] + grad[5] * m[2];
            s1 += w * (exact.gradient(x) - Vector2::new(gx, gy)).norm_squared();
            let v: f64 = (0..6).map(|b| val[b] * m[b]).sum();
            s0 += w * (exact.value(x) - v).powi(2);
        }
    }
    ErrorNorms {
        e0: s0.sqrt(),
        e1: s1.sqrt(),
        e2: s2.sqrt(),
    }
}

/// `rate_i = log(e_{i-1}/e_i) / log(h_{i-1}/h_i)`; the first entry is
/// `None`.
pub fn eoc(errors: &[f64], h: &[f64]) -> Result<Vec<Option<f64>>, AnalysisError> {
    if errors.len() != h.len() {
        return Err(AnalysisError::LengthMismatch(errors.len(), h.len()));
    }
    if let Some(i) = errors.iter().position(|&e| !(e > 0.0)) {
        return Err(AnalysisError::NonPositiveError(i));
    }
    for i in 0..h.len() {
        if !(h[i] > 0.0) || (i > 0 && h[i] >= h[i - 1]) {
            return Err(AnalysisError::BadMeshSizes(i));
        }
    }
    Ok((0..errors.len())
        .map(|i| (i > 0).then(|| (errors[i - 1] / errors[i]).ln() / (h[i - 1] / h[i]).ln()))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub family: Family,
    pub mesh: MeshKind,
    /// Subdivisions per side; the reported `1/h`.
    pub inv_h: usize,
    pub ndof: usize,
    pub errors: ErrorNorms,
    pub rate2: Option<f64>,
    pub rate1: Option<f64>,
    pub rate0: Option<f64>,
    pub newton_iters: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub problem: String,
    pub rows: Vec<ConvergenceRow>,
}

pub const CSV_HEADER: &str = "family,mesh,inv_h,ndof,E2,rate2,E1,rate1,E0,rate0,newton_iters,seconds";

impl ConvergenceReport {
    /// CSV with the fixed column set. Wall times are written only when
    /// `timing` is set so that repeated runs are byte-identical.
    pub fn to_csv(&self, timing: bool) -> String {
        let rate = |r: Option<f64>| r.map(|r| format!("{r:.4}")).unwrap_or_default();
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{:.6e},{},{:.6e},{},{:.6e},{},{},{}",
                r.family,
                r.mesh,
                r.inv_h,
                r.ndof,
                r.errors.e2,
                rate(r.rate2),
                r.errors.e1,
                rate(r.rate1),
                r.errors.e0,
                rate(r.rate0),
                r.newton_iters,
                if timing { format!("{:.3}", r.seconds) } else { String::new() }
            )
            .unwrap();
        }
        out
    }

    /// Rates of the last row as `(rate2, rate1, rate0)`.
    pub fn last_rates(&self) -> Option<(f64, f64, f64)> {
        let r = self.rows.last()?;
        Some((r.rate2?, r.rate1?, r.rate0?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub newton: NewtonConfig,
    pub quad_order: usize,
    pub load_rule: LoadRule,
    pub seed: u64,
    /// Fail when Newton stops without meeting the tolerance.
    pub require_convergence: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            newton: NewtonConfig::default(),
            quad_order: DEFAULT_QUAD_ORDER,
            load_rule: LoadRule::Centroid,
            seed: 0,
            require_convergence: true,
        }
    }
}

/// Solves on each refinement level in order and tabulates errors and
/// rates. Rates use the nominal mesh size `1/n`.
pub fn convergence_study(
    problem: &HJBProblem,
    family: Family,
    mesh: MeshKind,
    levels: &[usize],
    config: &StudyConfig,
) -> Result<ConvergenceReport, AnalysisError> {
    if levels.is_empty() {
        return Err(AnalysisError::NoLevels);
    }
    let exact = problem.exact_or_err()?;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels.len());
    for &level in levels {
        let start = Instant::now();
        let m = generate_structured(mesh, level, problem.domain, config.seed)
            .map_err(|source| AnalysisError::Mesh { level, source })?;
        let disc = Discretization::new(m, family, problem.lambda, config.quad_order)
            .map_err(|source| AnalysisError::Assembly { level, source })?
            .with_load_rule(config.load_rule);
        let res = solve_hjb(&disc, problem, &config.newton).map_err(|source| AnalysisError::Newton { level, source })?;
        if config.require_convergence && !res.trace.converged {
            return Err(AnalysisError::NotConverged {
                level,
                iterations: res.trace.iterations(),
                err: res.trace.final_err().unwrap_or(f64::NAN),
            });
        }
        let errors = error_norms(&disc, &res.solution, exact);
        let seconds = start.elapsed().as_secs_f64();
        let rate = |prev: f64, cur: f64, prev_level: usize| {
            (prev / cur).ln() / (level as f64 / prev_level as f64).ln()
        };
        let (rate2, rate1, rate0) = match rows.last() {
            Some(p) => (
                Some(rate(p.errors.e2, errors.e2, p.inv_h)),
                Some(rate(p.errors.e1, errors.e1, p.inv_h)),
                Some(rate(p.errors.e0, errors.e0, p.inv_h)),
            ),
            None => (None, None, None),
        };
        rows.push(ConvergenceRow {
            family,
            mesh,
            inv_h: level,
            ndof: disc.num_free(),
            errors,
            rate2,
            rate1,
            rate0,
            newton_iters: res.trace.iterations(),
            seconds,
        });
    }
    Ok(ConvergenceReport {
        problem: problem.name.clone(),
        rows,
    })
}

/// `(||D2 v||, ||Lap v||)` on the unit square for
/// `v = x(1-x) y(1-y) p` with `p = sum c_i {1, x, y, x^2, xy, y^2}_i`.
pub fn miranda_talenti_norms(c: &[f64; 6]) -> (f64, f64) {
    let square = [
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    // v has degree 6, so its second derivatives squared have degree 8
    let rule = cell_rule(&square, 8).expect("unit square is star-shaped");
    let (mut hess2, mut lap2) = (0.0, 0.0);
    for (x, w) in rule.points.iter().zip(&rule.weights) {
        let (px, py) = (x.x, x.y);
        let p = c[0] + c[1] * px + c[2] * py + c[3] * px * px + c[4] * px * py + c[5] * py * py;
        let gp = Vector2::new(c[1] + 2.0 * c[3] * px + c[4] * py, c[2] + c[4] * px + 2.0 * c[5] * py);
        let hp = Matrix2::new(2.0 * c[3], c[4], c[4], 2.0 * c[5]);
        let (fx, fy) = (px * (1.0 - px), py * (1.0 - py));
        let b = fx * fy;
        let gb = Vector2::new((1.0 - 2.0 * px) * fy, fx * (1.0 - 2.0 * py));
        let hb = Matrix2::new(-2.0 * fy, (1.0 - 2.0 * px) * (1.0 - 2.0 * py), (1.0 - 2.0 * px) * (1.0 - 2.0 * py), -2.0 * fx);
        let h = hb * p + gb * gp.transpose() + gp * gb.transpose() + hp * b;
        hess2 += w * h.component_mul(&h).sum();
        lap2 += w * h.trace().powi(2);
    }
    (hess2.sqrt(), lap2.sqrt())
}
