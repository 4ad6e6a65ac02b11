//! TOML run configuration.
//!
//! ```toml
//! [problem]
//! name = "example2"
//! lambda = 0.5
//! n_theta = 16
//! n_phi = 16
//! g_reference = [64, 64]
//!
//! [discretization]
//! family = "conforming"
//! mesh = "triangle"
//! mesh_file = "cells.mesh"
//! levels = [8, 16, 32]
//! quad_order = 8
//! load_rule = "centroid"
//! seed = 0
//!
//! [newton]
//! tol = 1e-8
//! itermax = 30
//! metric = "hessian-increment"
//! theta = 0.5
//!
//! [output]
//! path = "report.csv"
//! timing = false
//! ```
//!
//! Every key is optional. Unknown keys and sections are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use hjb_vem::analysis::StudyConfig;
use hjb_vem::assembly::{LoadRule, DEFAULT_QUAD_ORDER};
use hjb_vem::element::Family;
use hjb_vem::mesh::MeshKind;
use hjb_vem::newton::{NewtonConfig, StopMetric};
use hjb_vem::problem::BuiltinOptions;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub problem: ProblemSection,
    #[serde(default)]
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub newton: NewtonSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub name: Option<String>,
    pub lambda: Option<f64>,
    pub n_theta: Option<usize>,
    pub n_phi: Option<usize>,
    pub g_reference: Option<[usize; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    pub family: Option<Family>,
    pub mesh: Option<MeshKind>,
    pub mesh_file: Option<PathBuf>,
    pub levels: Option<Vec<usize>>,
    pub quad_order: Option<usize>,
    pub load_rule: Option<LoadRule>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonSection {
    pub tol: Option<f64>,
    pub itermax: Option<usize>,
    pub metric: Option<StopMetric>,
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
    pub timing: Option<bool>,
}

#[derive(Debug)]
pub enum ConfigError {
    Read { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, source: toml::de::Error },
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { path, source } => write!(f, "invalid config {}: {source}", path.display()),
            ConfigError::Invalid(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Overwrites every key set in `other`.
    pub fn merge(&mut self, other: RunConfig) {
        fn take<T>(dst: &mut Option<T>, src: Option<T>) {
            if src.is_some() {
                *dst = src;
            }
        }
        let (p, q) = (&mut self.problem, other.problem);
        take(&mut p.name, q.name);
        take(&mut p.lambda, q.lambda);
        take(&mut p.n_theta, q.n_theta);
        take(&mut p.n_phi, q.n_phi);
        take(&mut p.g_reference, q.g_reference);
        let (d, e) = (&mut self.discretization, other.discretization);
        take(&mut d.family, e.family);
        take(&mut d.mesh, e.mesh);
        take(&mut d.mesh_file, e.mesh_file);
        take(&mut d.levels, e.levels);
        take(&mut d.quad_order, e.quad_order);
        take(&mut d.load_rule, e.load_rule);
        take(&mut d.seed, e.seed);
        let (n, m) = (&mut self.newton, other.newton);
        take(&mut n.tol, m.tol);
        take(&mut n.itermax, m.itermax);
        take(&mut n.metric, m.metric);
        take(&mut n.theta, m.theta);
        let (o, r) = (&mut self.output, other.output);
        take(&mut o.path, r.path);
        take(&mut o.timing, r.timing);
    }

    pub fn problem_name(&self) -> Result<&str, ConfigError> {
        self.problem
            .name
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("problem.name is required".into()))
    }

    pub fn builtin_options(&self) -> Result<BuiltinOptions, ConfigError> {
        let d = BuiltinOptions::default();
        let opts = BuiltinOptions {
            n_theta: self.problem.n_theta.unwrap_or(d.n_theta),
            n_phi: self.problem.n_phi.unwrap_or(d.n_phi),
            g_reference: self.problem.g_reference.map(|[a, b]| (a, b)).or(d.g_reference),
        };
        if opts.n_theta == 0 || opts.n_phi == 0 {
            return Err(ConfigError::Invalid("problem.n_theta and problem.n_phi must be positive".into()));
        }
        Ok(opts)
    }

    pub fn family(&self) -> Family {
        self.discretization.family.unwrap_or(Family::Conforming)
    }

    pub fn mesh_kind(&self) -> MeshKind {
        self.discretization.mesh.unwrap_or(MeshKind::Triangle)
    }

    pub fn levels(&self) -> Result<Vec<usize>, ConfigError> {
        let levels = self.discretization.levels.clone().unwrap_or_else(|| vec![8, 16, 32]);
        if levels.is_empty() || levels.contains(&0) {
            return Err(ConfigError::Invalid(format!(
                "discretization.levels must be a non-empty list of positive integers, got {levels:?}"
            )));
        }
        Ok(levels)
    }

    pub fn newton(&self) -> Result<NewtonConfig, ConfigError> {
        let d = NewtonConfig::default();
        let cfg = NewtonConfig {
            tol: self.newton.tol.unwrap_or(d.tol),
            itermax: self.newton.itermax.unwrap_or(d.itermax),
            metric: self.newton.metric.unwrap_or(d.metric),
            theta: self.newton.theta.unwrap_or(d.theta),
            ..d
        };
        if !(cfg.tol > 0.0 && cfg.tol < 1.0) {
            return Err(ConfigError::Invalid(format!("newton.tol must lie in (0, 1), got {}", cfg.tol)));
        }
        if !(0.0..=1.0).contains(&cfg.theta) {
            return Err(ConfigError::Invalid(format!("newton.theta must lie in [0, 1], got {}", cfg.theta)));
        }
        Ok(cfg)
    }

    pub fn quad_order(&self) -> usize {
        self.discretization.quad_order.unwrap_or(DEFAULT_QUAD_ORDER)
    }

    pub fn study(&self) -> Result<StudyConfig, ConfigError> {
        Ok(StudyConfig {
            newton: self.newton()?,
            quad_order: self.quad_order(),
            load_rule: self.discretization.load_rule.unwrap_or_default(),
            seed: self.discretization.seed.unwrap_or(0),
            ..StudyConfig::default()
        })
    }

    pub fn timing(&self) -> bool {
        self.output.timing.unwrap_or(false)
    }
}
