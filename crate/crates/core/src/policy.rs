//! Policies map covariates to a distribution over the `K` actions.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};

pub trait Policy: Debug + Send + Sync {
    /// Stable identifier used in traces and reports.
    fn id(&self) -> &str;

    fn num_actions(&self) -> usize;

    /// Required covariate dimension, if the policy reads covariates at all.
    fn covariate_dim(&self) -> Option<usize> {
        None
    }

    /// Writes `pi(k, x)` for `k = 1..=K` into `out[k-1]`. `out.len()` equals
    /// `num_actions()`; `x` has already been checked against `covariate_dim`.
    fn fill_probs(&self, x: &[f64], out: &mut [f64]);
}

pub type PolicyRef = Arc<dyn Policy>;

/// `pi(., x)` as a fresh vector, with the dimension checked.
pub fn action_distribution(policy: &dyn Policy, x: &[f64]) -> Result<Vec<f64>> {
    if let Some(d) = policy.covariate_dim() {
        if d != x.len() {
            return Err(Error::CovariateDimension {
                expected: d,
                got: x.len(),
            });
        }
    }
    let mut out = vec![0.0; policy.num_actions()];
    policy.fill_probs(x, &mut out);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct UniformPolicy {
    id: String,
    k: usize,
}

impl UniformPolicy {
    pub fn new(k: usize) -> Self {
        Self {
            id: format!("uniform-{k}"),
            k,
        }
    }
}

impl Policy for UniformPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn num_actions(&self) -> usize {
        self.k
    }

    fn fill_probs(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(1.0 / self.k as f64);
    }
}

/// Always plays one action.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    id: String,
    action: usize,
    k: usize,
}

impl ConstantPolicy {
    pub fn new(action: usize, k: usize) -> Result<Self> {
        if action == 0 || action > k {
            return Err(Error::InvalidArgument(format!(
                "action {action} not in 1..={k}"
            )));
        }
        Ok(Self {
            id: format!("always-{action}"),
            action,
            k,
        })
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl Policy for ConstantPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn num_actions(&self) -> usize {
        self.k
    }

    fn fill_probs(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        out[self.action - 1] = 1.0;
    }
}

/// Plays `treat` when `w . x < cutoff`, otherwise `control`.
#[derive(Debug, Clone)]
pub struct LinearThresholdPolicy {
    id: String,
    weights: Vec<f64>,
    cutoff: f64,
    treat: usize,
    control: usize,
    k: usize,
}

impl LinearThresholdPolicy {
    pub fn new(
        id: impl Into<String>,
        weights: Vec<f64>,
        cutoff: f64,
        treat: usize,
        control: usize,
        k: usize,
    ) -> Result<Self> {
        for a in [treat, control] {
            if a == 0 || a > k {
                return Err(Error::InvalidArgument(format!("action {a} not in 1..={k}")));
            }
        }
        Ok(Self {
            id: id.into(),
            weights,
            cutoff,
            treat,
            control,
            k,
        })
    }
}

impl Policy for LinearThresholdPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn num_actions(&self) -> usize {
        self.k
    }

    fn covariate_dim(&self) -> Option<usize> {
        Some(self.weights.len())
    }

    fn fill_probs(&self, x: &[f64], out: &mut [f64]) {
        let score: f64 = self.weights.iter().zip(x).map(|(w, v)| w * v).sum();
        out.fill(0.0);
        if score < self.cutoff {
            out[self.treat - 1] = 1.0;
        } else {
            out[self.control - 1] = 1.0;
        }
    }
}
