//! Safety requirements and tuning knobs shared by the learners.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Direction of a guardrail. A `Lower` guardrail certifies
/// `V_j(pi) - (1+w_j) V_j(pi0) >= 0`; an `Upper` one (cost-like outcomes)
/// certifies `V_j(pi) - (1+w_j) V_j(pi0) <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    #[default]
    Lower,
    Upper,
}

impl Sense {
    /// `+1` for lower, `-1` for upper: multiplying a bound by this turns it
    /// into a margin that must be positive to certify.
    pub fn sign(self) -> f64 {
        match self {
            Sense::Lower => 1.0,
            Sense::Upper => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Guardrail {
    /// 1-indexed outcome.
    pub outcome: usize,
    pub weight: f64,
    #[serde(default)]
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    /// 1-indexed goal outcome.
    pub goal: usize,
    pub guardrails: Vec<Guardrail>,
    pub alpha: f64,
}

impl SafetySpec {
    /// Lower-sense guardrails on `outcomes` with `weights`.
    pub fn new(goal: usize, outcomes: &[usize], weights: &[f64], alpha: f64) -> Result<Self> {
        if outcomes.len() != weights.len() {
            return Err(Error::InvalidSpec(format!(
                "{} guardrails but {} weights",
                outcomes.len(),
                weights.len()
            )));
        }
        let spec = Self {
            goal,
            guardrails: outcomes
                .iter()
                .zip(weights)
                .map(|(&outcome, &weight)| Guardrail {
                    outcome,
                    weight,
                    sense: Sense::Lower,
                })
                .collect(),
            alpha,
        };
        spec.check()?;
        Ok(spec)
    }

    pub fn with_senses(mut self, senses: &[Sense]) -> Result<Self> {
        if senses.len() != self.guardrails.len() {
            return Err(Error::InvalidSpec(format!(
                "{} senses for {} guardrails",
                senses.len(),
                self.guardrails.len()
            )));
        }
        for (g, s) in self.guardrails.iter_mut().zip(senses) {
            g.sense = *s;
        }
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        if self.guardrails.is_empty() {
            return Err(Error::InvalidSpec("guardrail set is empty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidSpec(format!("alpha {} not in (0,1)", self.alpha)));
        }
        if self.goal == 0 {
            return Err(Error::InvalidSpec("goal index is 1-based".into()));
        }
        for g in &self.guardrails {
            if g.outcome == 0 {
                return Err(Error::InvalidSpec("guardrail indices are 1-based".into()));
            }
            if !(g.weight <= 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "guardrail weight {} must be <= 0",
                    g.weight
                )));
            }
        }
        Ok(())
    }

    /// Full check including outcome indices against `d_Y`.
    pub fn validate(&self, num_outcomes: usize) -> Result<()> {
        self.check()?;
        if self.goal > num_outcomes {
            return Err(Error::InvalidSpec(format!(
                "goal {} exceeds outcome count {num_outcomes}",
                self.goal
            )));
        }
        if let Some(g) = self.guardrails.iter().find(|g| g.outcome > num_outcomes) {
            return Err(Error::InvalidSpec(format!(
                "guardrail {} exceeds outcome count {num_outcomes}",
                g.outcome
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.guardrails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guardrails.is_empty()
    }

    pub fn max_weight(&self) -> f64 {
        self.guardrails
            .iter()
            .map(|g| g.weight)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which guarantee the learner targets. `Finite` pairs IPW with empirical
/// Bernstein bounds; `Asymptotic` pairs cross-fitted DR with sup-t bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Finite,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    /// Stability constant; `epsilon = gamma / sqrt(n)`.
    pub gamma: f64,
    /// Cap on the pruned set. `None` uses the class-size heuristic.
    pub eta: Option<usize>,
    /// Sensitivity override. Must not be below the mode's floor.
    pub sensitivity: Option<f64>,
    /// Exponent in the `eta` heuristic.
    pub p: f64,
    /// Gaussian draws for the final sup-t quantile.
    pub n_sim: usize,
    /// Gaussian draws for in-loop sup-t quantiles.
    pub n_sim_in_loop: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            eta: None,
            sensitivity: None,
            p: 0.5,
            n_sim: 100_000,
            n_sim_in_loop: 10_000,
            folds: 5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "gamma {} must be > 0",
                self.gamma
            )));
        }
        if self.eta == Some(0) {
            return Err(Error::InvalidHyperparameter("eta must be >= 1".into()));
        }
        if self.n_sim < 1 || self.n_sim_in_loop < 1 {
            return Err(Error::InvalidHyperparameter("n_sim must be >= 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidHyperparameter("folds must be >= 2".into()));
        }
        if !(self.p < 1.0) {
            return Err(Error::InvalidHyperparameter(format!("p {} must be < 1", self.p)));
        }
        if let Some(b) = self.sensitivity {
            if !(b > 0.0) {
                return Err(Error::InvalidHyperparameter(format!(
                    "sensitivity {b} must be > 0"
                )));
            }
        }
        Ok(())
    }
}
