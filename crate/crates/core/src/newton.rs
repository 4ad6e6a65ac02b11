//! Semismooth Newton iteration: freeze the maximizing controls, solve the
//! linearized system, repeat.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{
    assemble_linearized, b_norm, hessian_increment_norm, select_argmax_controls, AssemblyError, Discretization,
    FrozenControlField,
};
use crate::linalg::{LinalgError, SparseLu};
use crate::problem::HJBProblem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NewtonError {
    #[error("tolerance must lie in (0, 1), got {0}")]
    InvalidTolerance(f64),
    #[error("itermax must be at least 1")]
    ZeroIterations,
    #[error("initial guess has length {found}, expected {expected}")]
    InitialGuess { expected: usize, found: usize },
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("linear solve failed at iteration {iteration}: {source}")]
    Linear {
        iteration: usize,
        #[source]
        source: LinalgError,
    },
}

/// Which increment norm decides convergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMetric {
    /// `sqrt(sum_K |K| |Pi_0 D2 (u_{j+1} - u_j)|^2)`.
    HessianIncrement,
    /// The discrete energy norm of the increment.
    BNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    Zero,
    /// Free-DOF vector, e.g. an interpolant.
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    pub tol: f64,
    pub itermax: usize,
    pub initial: InitialGuess,
    pub metric: StopMetric,
    pub theta: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            itermax: 30,
            initial: InitialGuess::Zero,
            metric: StopMetric::HessianIncrement,
            theta: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonStep {
    /// Increment in the configured metric.
    pub err: f64,
    pub hessian_increment: f64,
    pub b_norm_increment: f64,
    /// Quadrature points whose control differs from the previous step.
    pub controls_changed: usize,
    /// `|A x - b| / |b|` of the linear solve.
    pub linear_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonTrace {
    pub steps: Vec<NewtonStep>,
    pub converged: bool,
}

impl NewtonTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn final_err(&self) -> Option<f64> {
        self.steps.last().map(|s| s.err)
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub solution: Vec<f64>,
    pub trace: NewtonTrace,
    pub controls: FrozenControlField,
}

/// Runs the iteration until the increment drops to `tol` or `itermax`
/// solves have been done. Non-convergence is reported in the trace, with
/// the last iterate returned.
pub fn solve_hjb(
    disc: &Discretization,
    problem: &HJBProblem,
    config: &NewtonConfig,
) -> Result<NewtonResult, NewtonError> {
    if !(config.tol > 0.0 && config.tol < 1.0) {
        return Err(NewtonError::InvalidTolerance(config.tol));
    }
    if config.itermax == 0 {
        return Err(NewtonError::ZeroIterations);
    }
    let n = disc.num_free();
    let mut u = match &config.initial {
        InitialGuess::Zero => vec![0.0; n],
        InitialGuess::Vector(v) if v.len() == n => v.clone(),
        InitialGuess::Vector(v) => {
            return Err(NewtonError::InitialGuess {
                expected: n,
                found: v.len(),
            })
        }
    };
    let mut steps = Vec::new();
    let mut previous: Option<FrozenControlField> = None;
    let mut converged = false;
    let mut frozen = select_argmax_controls(disc, problem, &u)?;
    for iteration in 0..config.itermax {
        if iteration > 0 {
            frozen = select_argmax_controls(disc, problem, &u)?;
        }
        let changed = previous.as_ref().map_or(0, |p| frozen.count_changed(p));
        let sys = assemble_linearized(disc, &frozen, config.theta)?;
        let lu = SparseLu::factor(&sys.matrix).map_err(|source| NewtonError::Linear { iteration, source })?;
        let next = lu.solve(&sys.rhs).map_err(|source| NewtonError::Linear { iteration, source })?;
        let ax = sys.matrix.mul_vec(&next);
        let bn = norm(&sys.rhs);
        let linear_residual = if bn > 0.0 {
            norm(&ax.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect::<Vec<_>>()) / bn
        } else {
            0.0
        };
        let du: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let hessian_increment = hessian_increment_norm(disc, &du);
        let b_norm_increment = b_norm(disc, &du);
        let err = match config.metric {
            StopMetric::HessianIncrement => hessian_increment,
            StopMetric::BNorm => b_norm_increment,
        };
        steps.push(NewtonStep {
            err,
            hessian_increment,
            b_norm_increment,
            controls_changed: changed,
            linear_residual,
        });
        u = next;
        previous = Some(frozen.clone());
        if err <= config.tol {
            converged = true;
            break;
        }
    }
    Ok(NewtonResult {
        solution: u,
        trace: NewtonTrace { steps, converged },
        controls: frozen,
    })
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
