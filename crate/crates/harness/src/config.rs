use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use diffsim::control::{AdaptiveConfig, CostSpec};
use diffsim::estimate::OptimizerConfig;
use diffsim::integrate::{IntegratorConfig, Method};
use diffsim::model::{DhParams, ParameterBinding};
use diffsim::sensitivity::GradMethod;

use crate::error::{HarnessError, Result};

/// Read a JSON config. `seed` overrides (or supplies) the config's seed;
/// a config that ends up without one is rejected.
pub fn load<T: DeserializeOwned>(path: &Path, seed: Option<u64>) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse(&text, seed).map_err(|e| match e {
        HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse<T: DeserializeOwned>(text: &str, seed: Option<u64>) -> Result<T> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| HarnessError::Config("expected a JSON object".into()))?;
    if let Some(s) = seed {
        obj.insert("seed".into(), s.into());
    }
    if !obj.contains_key("seed") {
        return Err(HarnessError::Config("missing field `seed` (every experiment needs a seed)".into()));
    }
    serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))
}

/// Resolve `p` against the directory of the config file.
pub fn resolve(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

fn one() -> usize {
    1
}

fn unit_horizon() -> f64 {
    1.0
}

fn micro() -> f64 {
    1e-6
}

fn rk4() -> Method {
    Method::Rk4
}

fn all_methods() -> Vec<GradMethod> {
    GradMethod::ALL.to_vec()
}

/// Gradient-engine benchmark on n-link compound pendulums: the gradient of
/// `½‖x(t1)‖²` with respect to the link lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    /// Link counts.
    pub links: Vec<usize>,
    /// Integrator steps.
    pub dt: Vec<f64>,
    #[serde(default = "all_methods")]
    pub methods: Vec<GradMethod>,
    #[serde(default = "rk4")]
    pub integrator: Method,
    /// Error tolerances of the adaptive methods, whose `dt` is the first step.
    #[serde(default = "micro")]
    pub abs_tol: f64,
    #[serde(default = "micro")]
    pub rel_tol: f64,
    /// Simulated span `t1`.
    #[serde(default = "unit_horizon")]
    pub horizon: f64,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Worker threads (default: all cores).
    #[serde(default)]
    pub threads: Option<usize>,
    pub seed: u64,
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.links.is_empty() || self.links.contains(&0) {
            return Err(HarnessError::Config("links must be non-empty and every n ≥ 1".into()));
        }
        if self.repetitions == 0 {
            return Err(HarnessError::Config("repetitions must be at least 1".into()));
        }
        if self.dt.is_empty() || self.dt.iter().any(|d| !(*d > 0.0)) || self.methods.is_empty() {
            return Err(HarnessError::Config("need at least one positive dt and one method".into()));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(HarnessError::Config("tolerances must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(HarnessError::Config("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Integrate a model from `x0` and write the samples as a reference CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: PathBuf,
    /// Initial flat state `[q, q̇]`; drawn from the seed (angles in ±0.5) if absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub samples: usize,
    pub sample_dt: f64,
    #[serde(default = "default_rk4")]
    pub integrator: IntegratorConfig,
    pub seed: u64,
}

fn default_rk4() -> IntegratorConfig {
    IntegratorConfig::fixed(Method::Rk4, 0.01)
}

fn coupled() -> GradMethod {
    GradMethod::Coupled
}

/// Fit bound model parameters to a reference trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub model: PathBuf,
    pub reference: PathBuf,
    pub parameters: ParameterBinding,
    pub theta0: Vec<f64>,
    #[serde(default = "coupled")]
    pub method: GradMethod,
    #[serde(default = "default_rk4")]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointTrajectory {
    pub q: Vec<Vec<f64>>,
    pub p: Vec<[f64; 3]>,
}

fn thirty_percent() -> f64 {
    0.3
}

fn fifty() -> usize {
    50
}

fn design_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        max_iters: 500,
        grad_tol: 1e-10,
        ..OptimizerConfig::default()
    }
}

/// Recover the DH parameters of `arm` from its end-effector path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// The arm that generates the task-space trajectory.
    pub arm: DhParams,
    /// Start design; otherwise every scalar of `arm` scaled by a seeded
    /// factor in `[1 − perturbation, 1 + perturbation]`.
    #[serde(default)]
    pub start: Option<DhParams>,
    #[serde(default = "thirty_percent")]
    pub perturbation: f64,
    /// Seeded joint configurations (uniform in ±π) when no trajectory is given.
    #[serde(default = "fifty")]
    pub configurations: usize,
    #[serde(default)]
    pub trajectory: Option<JointTrajectory>,
    #[serde(default = "design_optimizer")]
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

/// Start parameters: one value for every entry, or the full vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialTheta {
    Uniform(f64),
    Explicit(Vec<f64>),
}

impl InitialTheta {
    pub fn expand(&self, n: usize) -> Result<Vec<f64>> {
        match self {
            InitialTheta::Uniform(v) => Ok(vec![*v; n]),
            InitialTheta::Explicit(v) if v.len() == n => Ok(v.clone()),
            InitialTheta::Explicit(v) => Err(HarnessError::Config(format!("theta0 has {} entries, the model needs {n}", v.len()))),
        }
    }
}

fn twenty() -> f64 {
    20.0
}

fn held_out_default() -> usize {
    50
}

/// Adaptive MPC against a hidden-parameter cart-pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub poles: usize,
    /// Parameters of the environment; the library cart-pole if absent.
    #[serde(default)]
    pub hidden: Option<Vec<f64>>,
    /// Controller's starting parameters; the hidden ones if absent.
    #[serde(default)]
    pub theta0: Option<InitialTheta>,
    #[serde(default)]
    pub cost: Option<CostSpec>,
    /// Symmetric bound on the cart force.
    #[serde(default = "twenty")]
    pub control_limit: f64,
    #[serde(default)]
    pub adaptive: AdaptiveConfig,
    /// Environment integrator; tight Dormand–Prince if absent.
    #[serde(default)]
    pub env_integrator: Option<IntegratorConfig>,
    /// Seeded transitions for the held-out prediction error.
    #[serde(default = "held_out_default")]
    pub held_out: usize,
    pub seed: u64,
}
