use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ProblemError;

/// One sampled control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ControlPoint {
    Single,
    Label(i64),
    /// Shear angle `theta` and rotation angle `phi`.
    Angles { theta: f64, phi: f64 },
}

/// How a control set is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlSpec {
    Singleton,
    List(Vec<i64>),
    /// `n_theta` points over `[0, theta_max]` (both ends included) times
    /// `n_phi` points over `[0, 2 pi)`.
    AngleGrid { n_theta: usize, theta_max: f64, n_phi: usize },
}

/// A finite, ordered control set. Ties in any maximization are resolved
/// towards the lowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSet {
    points: Vec<ControlPoint>,
    spec: ControlSpec,
}

impl ControlSet {
    pub fn points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn spec(&self) -> &ControlSpec {
        &self.spec
    }

    pub fn get(&self, i: usize) -> ControlPoint {
        self.points[i]
    }
}

pub fn sample_control_set(spec: &ControlSpec) -> Result<ControlSet, ProblemError> {
    let points = match spec {
        ControlSpec::Singleton => vec![ControlPoint::Single],
        ControlSpec::List(labels) => labels.iter().map(|&l| ControlPoint::Label(l)).collect(),
        &ControlSpec::AngleGrid {
            n_theta,
            theta_max,
            n_phi,
        } => {
            if n_theta == 0 || n_phi == 0 {
                return Err(ProblemError::EmptyControlSet);
            }
            if !(theta_max.is_finite() && theta_max >= 0.0) {
                return Err(ProblemError::InvalidControlSpec(format!("theta_max = {theta_max}")));
            }
            let mut pts = Vec::with_capacity(n_theta * n_phi);
            for i in 0..n_theta {
                let theta = if n_theta == 1 {
                    0.0
                } else {
                    theta_max * i as f64 / (n_theta - 1) as f64
                };
                for j in 0..n_phi {
                    let phi = 2.0 * PI * j as f64 / n_phi as f64;
                    pts.push(ControlPoint::Angles { theta, phi });
                }
            }
            pts
        }
    };
    if points.is_empty() {
        return Err(ProblemError::EmptyControlSet);
    }
    Ok(ControlSet {
        points,
        spec: spec.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_endpoints() {
        let s = sample_control_set(&ControlSpec::AngleGrid {
            n_theta: 2,
            theta_max: PI / 3.0,
            n_phi: 1,
        })
        .unwrap();
        assert_eq!(
            s.points(),
            &[
                ControlPoint::Angles { theta: 0.0, phi: 0.0 },
                ControlPoint::Angles {
                    theta: PI / 3.0,
                    phi: 0.0
                }
            ]
        );
    }

    #[test]
    fn grid_product_and_lists() {
        let s = sample_control_set(&ControlSpec::AngleGrid {
            n_theta: 4,
            theta_max: PI / 3.0,
            n_phi: 8,
        })
        .unwrap();
        assert_eq!(s.len(), 32);
        let l = sample_control_set(&ControlSpec::List(vec![1, 2])).unwrap();
        assert_eq!(l.points(), &[ControlPoint::Label(1), ControlPoint::Label(2)]);
        assert_eq!(
            sample_control_set(&ControlSpec::List(vec![])),
            Err(ProblemError::EmptyControlSet)
        );
    }
}
