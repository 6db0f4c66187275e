//! TOML run configuration. Unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//!
//! [graph]
//! n = 10
//! p = 0.5
//! max_retries = 1000
//!
//! [problem]
//! m = 60
//! n_i = 40
//! sparsity_frac = 0.8
//! noise_var = 0.5
//! lambda = 0.15
//! theta = 7.0
//! box = [-10.0, 10.0]
//!
//! [algorithm]
//! variant = "atc"            # atc | cta | ghat | baseline
//! B = 3
//! schedule = "round_robin"   # round_robin | shuffled_cyclic
//! gamma0 = 0.3
//! mu = 1e-3
//! tau = 10.0
//! surrogate = "dc_linearization"
//!
//! [run]
//! max_rounds = 2000
//! metrics_stride = 1
//! stop_tol_J = 0.0
//! verify = false
//! ```
//!
//! Every table and key is optional and falls back to the values above.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sonata::{StepSizeSchedule, SurrogateKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub graph: GraphConfig,
    pub problem: ProblemConfig,
    pub algorithm: AlgorithmConfig,
    pub run: RunSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphConfig {
    /// Number of agents.
    pub n: usize,
    /// Erdős–Rényi edge probability.
    pub p: f64,
    pub max_retries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub m: usize,
    pub n_i: usize,
    pub sparsity_frac: f64,
    pub noise_var: f64,
    pub lambda: f64,
    pub theta: f64,
    #[serde(rename = "box")]
    pub bounds: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Atc,
    Cta,
    Ghat,
    Baseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleName {
    RoundRobin,
    ShuffledCyclic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmConfig {
    pub variant: VariantName,
    #[serde(rename = "B")]
    pub blocks: usize,
    pub schedule: ScheduleName,
    pub gamma0: f64,
    pub mu: f64,
    pub tau: f64,
    pub surrogate: SurrogateKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub max_rounds: usize,
    pub metrics_stride: usize,
    /// Stop once `J < stop_tol_J`; `0` disables early stopping.
    #[serde(rename = "stop_tol_J")]
    pub stop_tol_j: f64,
    /// Evaluate every per-round invariant and fail on the first violation.
    pub verify: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            graph: GraphConfig::default(),
            problem: ProblemConfig::default(),
            algorithm: AlgorithmConfig::default(),
            run: RunSettings::default(),
        }
    }
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self { n: 10, p: 0.5, max_retries: 1000 }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self { m: 60, n_i: 40, sparsity_frac: 0.8, noise_var: 0.5, lambda: 0.15, theta: 7.0, bounds: [-10.0, 10.0] }
    }
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            variant: VariantName::Atc,
            blocks: 3,
            schedule: ScheduleName::RoundRobin,
            gamma0: 0.3,
            mu: 1e-3,
            tau: 10.0,
            surrogate: SurrogateKind::DcLinearization,
        }
    }
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { max_rounds: 2000, metrics_stride: 1, stop_tol_j: 0.0, verify: false }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str::<Self>(&text)
            .map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
            .and_then(|cfg| cfg.validate().map(|_| cfg))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let g = &self.graph;
        if g.n == 0 {
            return bad("graph.n must be positive".into());
        }
        if !(g.p > 0.0 && g.p <= 1.0) {
            return bad(format!("graph.p = {} not in (0,1]", g.p));
        }
        let p = &self.problem;
        if p.m == 0 || p.n_i == 0 {
            return bad("problem.m and problem.n_i must be positive".into());
        }
        if !(0.0..1.0).contains(&p.sparsity_frac) {
            return bad(format!("problem.sparsity_frac = {} not in [0,1)", p.sparsity_frac));
        }
        if !(p.noise_var >= 0.0) || !(p.lambda >= 0.0) || !(p.theta > 0.0) {
            return bad("noise_var and lambda must be nonnegative, theta positive".into());
        }
        if !(p.bounds[0] < p.bounds[1]) {
            return bad(format!("problem.box = {:?} is empty", p.bounds));
        }
        let a = &self.algorithm;
        if a.blocks == 0 || !p.m.is_multiple_of(a.blocks) {
            return bad(format!("algorithm.B = {} must divide problem.m = {}", a.blocks, p.m));
        }
        StepSizeSchedule::new(a.gamma0, a.mu).map_err(|e| Error::Config(e.to_string()))?;
        if !(a.tau > 0.0) {
            return bad(format!("algorithm.tau = {} must be positive", a.tau));
        }
        if self.run.metrics_stride == 0 {
            return bad("run.metrics_stride must be positive".into());
        }
        if !(self.run.stop_tol_j >= 0.0) {
            return bad("run.stop_tol_J must be nonnegative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.problem.lambda, 0.15);
        assert_eq!(cfg.algorithm.tau, 10.0);
    }

    #[test]
    fn parses_exact_key_names() {
        let cfg =
            RunConfig::from_toml_str("seed = 7\n[algorithm]\nvariant = \"ghat\"\nB = 6\n[run]\nstop_tol_J = 1e-3\n")
                .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.algorithm.variant, VariantName::Ghat);
        assert_eq!(cfg.algorithm.blocks, 6);
        assert_eq!(cfg.run.stop_tol_j, 1e-3);
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(RunConfig::from_toml_str("[graph]\nnodes = 3\n").is_err());
        assert!(RunConfig::from_toml_str("extra = 1\n").is_err());
        assert!(RunConfig::from_toml_str("[algorithm]\nvariant = \"fast\"\n").is_err());
    }

    #[test]
    fn range_checks() {
        assert!(RunConfig::from_toml_str("[algorithm]\nB = 7\n").is_err());
        assert!(RunConfig::from_toml_str("[algorithm]\ngamma0 = 1.5\n").is_err());
        assert!(RunConfig::from_toml_str("[graph]\np = 0.0\n").is_err());
        assert!(RunConfig::from_toml_str("[problem]\nbox = [1.0, -1.0]\n").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }
}
