//! Synthetic benchmark: three uniform covariates, a fair coin for treatment,
//! two Bernoulli outcomes, and threshold policies `1[g_i(x) < c]` with exact
//! policy values.
//!
//! Outcome means given `(A, X)`:
//! `f1 = 0.5 (1 - 1[A=1] X2)` and `f2 = 0.5 (1 + 1[A=1] X1 X3)`,
//! so for a deterministic policy with treated set `T`,
//! `V1 = 0.5 (1 - E[T X2])` and `V2 = 0.5 (1 + E[T X1 X3])`.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, PropensityModel};
use crate::policy::{Policy, PolicyRef};
use crate::spec::{SafetySpec, Sense};
use crate::stability::linspace;

pub const NUM_COVARIATES: usize = 3;
pub const TREAT: usize = 1;
pub const CONTROL: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    G1,
    G2,
    G3,
    G4,
    G5,
}

impl Feature {
    pub const ALL: [Feature; 5] = [Feature::G1, Feature::G2, Feature::G3, Feature::G4, Feature::G5];

    #[inline]
    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            Feature::G1 => x[0],
            Feature::G2 => x[1],
            Feature::G3 => x[0] * x[1],
            Feature::G4 => x[0] * x[1] * x[2],
            Feature::G5 => -(x[0] * x[1] * x[2]),
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Feature::G1 => "g1",
            Feature::G2 => "g2",
            Feature::G3 => "g3",
            Feature::G4 => "g4",
            Feature::G5 => "g5",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "g1" => Ok(Feature::G1),
            "g2" => Ok(Feature::G2),
            "g3" => Ok(Feature::G3),
            "g4" => Ok(Feature::G4),
            "g5" => Ok(Feature::G5),
            _ => Err(format!("unknown feature `{s}`")),
        }
    }
}

/// Treats (action 1) iff `feature(x) < cutoff`; ties go to control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub id: String,
    pub feature: Feature,
    pub cutoff: f64,
}

impl ThresholdPolicy {
    pub fn new(feature: Feature, cutoff: f64) -> Self {
        Self {
            id: format!("{feature}<{cutoff:.6}"),
            feature,
            cutoff,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    #[inline]
    pub fn treats(&self, x: &[f64]) -> bool {
        self.feature.eval(x) < self.cutoff
    }

    /// Exact `(V1, V2)`.
    pub fn true_values(&self) -> (f64, f64) {
        let (m2, m13) = treated_moments(self.feature, self.cutoff);
        (0.5 * (1.0 - m2), 0.5 * (1.0 + m13))
    }
}

impl Policy for ThresholdPolicy {
    fn id(&self) -> &str {
        &self.id
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn covariate_dim(&self) -> Option<usize> {
        Some(NUM_COVARIATES)
    }

    #[inline]
    fn fill_probs(&self, x: &[f64], out: &mut [f64]) {
        if self.treats(x) {
            out[0] = 1.0;
            out[1] = 0.0;
        } else {
            out[0] = 0.0;
            out[1] = 1.0;
        }
    }
}

/// `P(X1 X2 < t)`-type moments for the product features, `t in [0, 1]`:
/// returns `(E[1[P<t] X2], E[1[P<t] X1 X3])` for `P = X1 X2 X3`.
fn triple_product_moments(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (0.5, 0.25);
    }
    let l = t.ln();
    (
        0.5 * t * t - t * l,
        t + 0.5 * t * t * l - 0.75 * t * t,
    )
}

/// `(E[T X2], E[T X1 X3])` for the treated set `T = 1[feature(X) < c]`.
pub fn treated_moments(feature: Feature, c: f64) -> (f64, f64) {
    let u = c.clamp(0.0, 1.0);
    match feature {
        Feature::G1 => (0.5 * u, 0.25 * u * u),
        Feature::G2 => (0.5 * u * u, 0.25 * u),
        Feature::G3 => {
            // E[1[X1 X2 < c] X1] = E[1[X1 X2 < c] X2] = c - c^2/2
            let h = u - 0.5 * u * u;
            (h, 0.5 * h)
        }
        Feature::G4 => triple_product_moments(c),
        Feature::G5 => {
            // -P < c  <=>  P > -c
            let (m2, m13) = triple_product_moments(-c);
            (0.5 - m2, 0.25 - m13)
        }
    }
}

/// The reference policy `1[X1 < 0.5]`.
pub fn baseline() -> ThresholdPolicy {
    ThresholdPolicy::new(Feature::G1, 0.5).with_id("baseline")
}

/// `5 * grid_size` threshold policies: for each feature in order, cutoffs at
/// `grid_size` evenly spaced points of `[0, 1]` including both ends.
pub fn build_class(grid_size: usize) -> Vec<ThresholdPolicy> {
    let cutoffs = linspace(0.0, 1.0, grid_size);
    Feature::ALL
        .iter()
        .flat_map(|&f| cutoffs.iter().map(move |&c| ThresholdPolicy::new(f, c)))
        .collect()
}

pub fn as_policy_refs(class: &[ThresholdPolicy]) -> Vec<PolicyRef> {
    class.iter().map(|p| Arc::new(p.clone()) as PolicyRef).collect()
}

/// Draws `n` observations with propensity 1/2 on each arm (floor 0.5).
pub fn generate<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    let obs = (0..n)
        .map(|_| {
            let x = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let treated = rng.random::<f64>() < 0.5;
            let (f1, f2) = if treated {
                (0.5 * (1.0 - x[1]), 0.5 * (1.0 + x[0] * x[2]))
            } else {
                (0.5, 0.5)
            };
            let y1 = if rng.random::<f64>() < f1 { 1.0 } else { 0.0 };
            let y2 = if rng.random::<f64>() < f2 { 1.0 } else { 0.0 };
            Observation::new(x.to_vec(), if treated { TREAT } else { CONTROL }, vec![y1, y2])
        })
        .collect();
    Dataset::new(obs, 2, PropensityModel::uniform(2)).expect("synthetic data is valid by construction")
}

/// True iff every guardrail holds on exact values:
/// `V_j(pi) - (1+w_j) V_j(pi0) >= 0` (`<= 0` for upper sense).
pub fn oracle_safe(values: &[f64], baseline_values: &[f64], spec: &SafetySpec) -> bool {
    spec.guardrails.iter().all(|g| {
        let diff = values[g.outcome - 1] - (1.0 + g.weight) * baseline_values[g.outcome - 1];
        match g.sense {
            Sense::Lower => diff >= 0.0,
            Sense::Upper => diff <= 0.0,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub policy_id: String,
    pub v1: f64,
    pub v2: f64,
    pub safe: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub baseline: (f64, f64),
    pub rows: Vec<TruthRow>,
}

impl TruthTable {
    pub fn build(class: &[ThresholdPolicy], base: &ThresholdPolicy, spec: &SafetySpec) -> Self {
        let (b1, b2) = base.true_values();
        let rows = class
            .iter()
            .map(|p| {
                let (v1, v2) = p.true_values();
                TruthRow {
                    policy_id: p.id.clone(),
                    v1,
                    v2,
                    safe: oracle_safe(&[v1, v2], &[b1, b2], spec),
                }
            })
            .collect();
        Self {
            baseline: (b1, b2),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy_id,v1,v2,safe\n");
        for r in &self.rows {
            s.push_str(&format!("{},{:.9},{:.9},{}\n", r.policy_id, r.v1, r.v2, r.safe as u8));
        }
        s
    }
}
