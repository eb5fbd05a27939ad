//! Experiment configuration files (TOML).
//!
//! See `docs/config.md` for the schema. Every section except `problem` and
//! `particles` may be omitted; `seed` and `schema_version` may not.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mfpmp::meanfield::StudyOptions;
use mfpmp::pmp::{DirectOptions, SweepOptions};
use mfpmp::problems::{self, Problem};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Largest particle count a run accepts; the exact assignment behind the
/// Lipschitz estimate is cubic in `N`.
pub const MAX_PARTICLES: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub problem: ProblemConfig,
    pub particles: ParticlesConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub id: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    /// A single `N` or a strictly increasing list.
    pub n: Sizes,
    /// Number of time steps `S`; the grid has `S + 1` nodes.
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(usize),
    Sweep(Vec<usize>),
}

impl Sizes {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Sizes::One(n) => vec![*n],
            Sizes::Sweep(ns) => ns.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sweep,
    Direct,
    Both,
}

impl Method {
    pub fn solvers(self) -> &'static [Solver] {
        match self {
            Method::Sweep => &[Solver::Sweep],
            Method::Direct => &[Solver::Direct],
            Method::Both => &[Solver::Sweep, Solver::Direct],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sweep,
    Direct,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Sweep => "sweep",
            Solver::Direct => "direct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SweepOptions::default();
        SolverConfig {
            method: Method::Sweep,
            theta: s.theta,
            tol: s.tol,
            max_iter: s.max_iter,
        }
    }
}

impl SolverConfig {
    pub fn sweep(&self) -> SweepOptions {
        SweepOptions {
            theta: self.theta,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }

    pub fn direct(&self) -> DirectOptions {
        DirectOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..DirectOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Run the convergence study over the `N` list and write `report.csv`.
    pub study: bool,
    pub trials: usize,
    pub delta: f64,
    pub sinkhorn_eps: f64,
    pub max_slope: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let s = StudyOptions::default();
        DiagnosticsConfig {
            study: true,
            trials: s.trials,
            delta: s.delta,
            sinkhorn_eps: s.sinkhorn_eps,
            max_slope: s.max_slope,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths are resolved against the working directory.
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn sizes(&self) -> Vec<usize> {
        self.particles.n.to_vec()
    }

    pub fn study_options(&self) -> StudyOptions {
        StudyOptions {
            sweep: self.solver.sweep(),
            delta: self.diagnostics.delta,
            sinkhorn_eps: self.diagnostics.sinkhorn_eps,
            trials: self.diagnostics.trials,
            max_slope: self.diagnostics.max_slope,
            seed: self.seed,
        }
    }

    pub fn build_problem(&self) -> Result<Problem, CliError> {
        problems::build(&self.problem.id, &self.problem.params).map_err(|e| CliError::Schema {
            path: "problem".into(),
            message: e.to_string(),
        })
    }

    /// Checks the invariants serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, message: String| {
            Err(CliError::Schema {
                path: path.into(),
                message,
            })
        };
        if self.schema_version != SCHEMA_VERSION {
            return bad(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            );
        }
        self.build_problem()?;
        let ns = self.sizes();
        if ns.is_empty() {
            return bad("particles.n", "needs at least one particle count".into());
        }
        if ns.iter().any(|&n| n == 0 || n > MAX_PARTICLES) {
            return bad("particles.n", format!("counts must lie in [1, {MAX_PARTICLES}]"));
        }
        if ns.windows(2).any(|w| w[0] >= w[1]) {
            return bad("particles.n", "must be strictly increasing".into());
        }
        if self.particles.steps == 0 {
            return bad("particles.steps", "must be positive".into());
        }
        let s = &self.solver;
        if !(s.theta > 0.0 && s.theta <= 1.0) {
            return bad("solver.theta", "must lie in (0, 1]".into());
        }
        if !(s.tol >= 0.0) {
            return bad("solver.tol", "must be nonnegative".into());
        }
        let d = &self.diagnostics;
        if !(d.delta > 0.0 && d.delta.is_finite()) {
            return bad("diagnostics.delta", "must be positive".into());
        }
        if !(d.sinkhorn_eps > 0.0 && d.sinkhorn_eps.is_finite()) {
            return bad("diagnostics.sinkhorn_eps", "must be positive".into());
        }
        if !(d.max_slope >= 0.0 && d.max_slope.is_finite()) {
            return bad("diagnostics.max_slope", "must be nonnegative".into());
        }
        Ok(())
    }
}

/// Parses and validates a configuration; errors carry the offending field path.
pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Schema {
        path: ".".into(),
        message: e.to_string(),
    })?;
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| CliError::Schema {
        path: e.path().to_string(),
        message: e.into_inner().to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse(&text)
}
