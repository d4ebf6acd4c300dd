//! JSON configuration documents for `simulate`, `run`, and `bounds-scatter`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::method::{Method, SCHEMA_VERSION};
use crate::policy::{ConstantPolicy, LinearThresholdPolicy, PolicyRef};
use crate::snpl::InLoopBound;
use crate::spec::{Hyperparams, Mode, SafetySpec, Sense};
use crate::synthetic::{self, Feature, ThresholdPolicy};

/// Flat form of a safety spec as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    #[serde(default = "default_goal")]
    pub goal: usize,
    #[serde(default = "default_guardrails")]
    pub guardrails: Vec<usize>,
    #[serde(default = "default_weights")]
    pub weights: Vec<f64>,
    #[serde(default)]
    pub senses: Option<Vec<Sense>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_goal() -> usize {
    1
}
fn default_guardrails() -> Vec<usize> {
    vec![1, 2]
}
fn default_weights() -> Vec<f64> {
    vec![0.0, -0.1]
}
fn default_alpha() -> f64 {
    0.1
}

impl Default for SpecConfig {
    fn default() -> Self {
        Self {
            goal: default_goal(),
            guardrails: default_guardrails(),
            weights: default_weights(),
            senses: None,
            alpha: default_alpha(),
        }
    }
}

impl SpecConfig {
    pub fn build(&self) -> Result<SafetySpec> {
        let spec = SafetySpec::new(self.goal, &self.guardrails, &self.weights, self.alpha)?;
        match &self.senses {
            Some(s) => spec.with_senses(s),
            None => Ok(spec),
        }
    }
}

/// A single policy rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum PolicyRule {
    /// `1[g(x) < cutoff]` over the three synthetic covariates.
    Threshold {
        feature: Feature,
        cutoff: f64,
        #[serde(default)]
        id: Option<String>,
    },
    /// `treat` iff `weights . x < cutoff`, else `control`.
    Linear {
        id: String,
        weights: Vec<f64>,
        cutoff: f64,
        #[serde(default = "one")]
        treat: usize,
        #[serde(default = "two")]
        control: usize,
    },
    Constant {
        action: usize,
        #[serde(default)]
        id: Option<String>,
    },
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}

impl PolicyRule {
    pub fn build(&self, num_actions: usize) -> Result<PolicyRef> {
        Ok(match self {
            PolicyRule::Threshold { feature, cutoff, id } => {
                let mut p = ThresholdPolicy::new(*feature, *cutoff);
                if let Some(id) = id {
                    p = p.with_id(id.clone());
                }
                Arc::new(p)
            }
            PolicyRule::Linear {
                id,
                weights,
                cutoff,
                treat,
                control,
            } => Arc::new(LinearThresholdPolicy::new(
                id.clone(),
                weights.clone(),
                *cutoff,
                *treat,
                *control,
                num_actions,
            )?),
            PolicyRule::Constant { action, id } => {
                let p = ConstantPolicy::new(*action, num_actions)?;
                Arc::new(match id {
                    Some(id) => p.with_id(id.clone()),
                    None => p,
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyClassConfig {
    /// The synthetic threshold grid (`5 * grid_size` policies).
    SyntheticGrid(usize),
    Rules(Vec<PolicyRule>),
}

impl Default for PolicyClassConfig {
    fn default() -> Self {
        PolicyClassConfig::SyntheticGrid(100)
    }
}

impl PolicyClassConfig {
    pub fn build(&self, num_actions: usize) -> Result<Vec<PolicyRef>> {
        let class = match self {
            PolicyClassConfig::SyntheticGrid(g) => {
                if *g < 2 {
                    return Err(Error::Schema(format!("grid size {g} must be >= 2")));
                }
                synthetic::as_policy_refs(&synthetic::build_class(*g))
            }
            PolicyClassConfig::Rules(rules) => rules
                .iter()
                .map(|r| r.build(num_actions))
                .collect::<Result<Vec<_>>>()?,
        };
        if class.is_empty() {
            return Err(Error::EmptyPolicyClass);
        }
        Ok(class)
    }
}

fn default_baseline() -> PolicyRule {
    PolicyRule::Threshold {
        feature: Feature::G1,
        cutoff: 0.5,
        id: Some("baseline".into()),
    }
}

fn default_method() -> Method {
    Method::Snpl
}

fn default_mode() -> Mode {
    Mode::Asymptotic
}

/// Configuration for applying one learner to a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub in_loop_bound: InLoopBound,
    #[serde(default)]
    pub spec: SpecConfig,
    #[serde(default)]
    pub hyper: Hyperparams,
    /// Defaults to the propensity column count, else the largest action seen.
    #[serde(default)]
    pub num_actions: Option<usize>,
    /// Constant assignment probabilities, used when the CSV has no `e` columns.
    #[serde(default)]
    pub propensity: Option<Vec<f64>>,
    /// Positivity floor; defaults to the smallest supplied propensity.
    #[serde(default)]
    pub propensity_floor: Option<f64>,
    #[serde(default)]
    pub covariate_dim: Option<usize>,
    #[serde(default)]
    pub num_outcomes: Option<usize>,
    #[serde(default)]
    pub policies: PolicyClassConfig,
    #[serde(default = "default_baseline")]
    pub baseline: PolicyRule,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method: default_method(),
            mode: default_mode(),
            in_loop_bound: InLoopBound::default(),
            spec: SpecConfig::default(),
            hyper: Hyperparams::default(),
            num_actions: None,
            propensity: Some(vec![0.5, 0.5]),
            propensity_floor: None,
            covariate_dim: None,
            num_outcomes: None,
            policies: PolicyClassConfig::default(),
            baseline: default_baseline(),
        }
    }
}

/// Configuration for a replicated synthetic benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub schema_version: u32,
    pub methods: Vec<Method>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub in_loop_bound: InLoopBound,
    pub n: usize,
    pub replications: usize,
    pub grid_size: usize,
    #[serde(default)]
    pub spec: SpecConfig,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default)]
    pub seed: u64,
    /// Write every replication's trace under `<out>/traces/`.
    #[serde(default)]
    pub write_traces: bool,
}

impl BenchmarkConfig {
    /// The synthetic-study defaults at the given class grid.
    pub fn synthetic(grid_size: usize, replications: usize, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            methods: Method::ALL.to_vec(),
            mode: Mode::Asymptotic,
            in_loop_bound: InLoopBound::default(),
            n: 1000,
            replications,
            grid_size,
            spec: SpecConfig::default(),
            hyper: Hyperparams::default(),
            seed,
            write_traces: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.schema_version)?;
        if self.replications == 0 {
            return Err(Error::Schema("replications must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Schema("no methods configured".into()));
        }
        if self.n < 2 {
            return Err(Error::Schema(format!("n = {} must be >= 2", self.n)));
        }
        if self.grid_size < 2 {
            return Err(Error::Schema(format!("grid size {} must be >= 2", self.grid_size)));
        }
        let spec = self.spec.build()?;
        spec.validate(2)?;
        self.hyper.validate()
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Schema(format!(
            "unsupported schema_version {v} (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let c: RunConfig = read_json(path)?;
    check_version(c.schema_version)?;
    c.spec.build()?;
    c.hyper.validate()?;
    Ok(c)
}

pub fn load_benchmark_config(path: &Path) -> Result<BenchmarkConfig> {
    let c: BenchmarkConfig = read_json(path)?;
    c.validate()?;
    Ok(c)
}
