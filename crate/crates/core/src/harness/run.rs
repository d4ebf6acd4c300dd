//! Applying a configured learner to a dataset file, and the per-policy bound
//! coordinates behind the pruning scatter plot.

use std::collections::HashSet;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::Evaluator;
use crate::method::{run_method, Trace};
use crate::policy::PolicyRef;
use crate::snpl::{in_loop_bound, snpl_run, SnplConfig, SnplTrace};
use crate::spec::{Sense, SafetySpec};

use super::config::RunConfig;
use super::io::{read_dataset_file, DatasetSchema};

impl RunConfig {
    pub fn dataset_schema(&self) -> DatasetSchema {
        DatasetSchema {
            num_actions: self.num_actions,
            propensity: self.propensity.clone(),
            propensity_floor: self.propensity_floor,
            covariate_dim: self.covariate_dim,
            num_outcomes: self.num_outcomes,
        }
    }
}

/// Everything `run` needs, checked against the dataset.
pub struct Prepared {
    pub spec: SafetySpec,
    pub class: Vec<PolicyRef>,
    pub baseline: PolicyRef,
}

pub fn prepare(ds: &Dataset, config: &RunConfig) -> Result<Prepared> {
    let spec = config.spec.build()?;
    spec.validate(ds.num_outcomes())?;
    let k = ds.num_actions();
    let class = config.policies.build(k)?;
    let baseline = config.baseline.build(k)?;
    let d = ds.covariate_dim();
    for p in class.iter().chain(std::iter::once(&baseline)) {
        if p.num_actions() != k {
            return Err(Error::Schema(format!(
                "policy `{}` has {} actions, dataset has {k}",
                p.id(),
                p.num_actions()
            )));
        }
        if let Some(pd) = p.covariate_dim() {
            if pd != d {
                return Err(Error::CovariateDimension { expected: pd, got: d });
            }
        }
    }
    Ok(Prepared { spec, class, baseline })
}

/// Runs the configured method on an in-memory dataset.
pub fn run_on_dataset(ds: &Dataset, config: &RunConfig) -> Result<Trace> {
    let p = prepare(ds, config)?;
    run_method(
        config.method,
        ds,
        &p.class,
        &p.baseline,
        &p.spec,
        config.mode,
        config.in_loop_bound,
        &config.hyper,
    )
}

pub fn run_single(data: &Path, config: &RunConfig) -> Result<Trace> {
    let ds = read_dataset_file(data, &config.dataset_schema())?;
    run_on_dataset(&ds, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub policy_id: String,
    /// Estimated relative change `V_j(pi) / V_j(pi0) - 1` for the first two guardrails.
    pub rel: [f64; 2],
    /// The same quantity at the confidence bound used by the learner.
    pub bound: [f64; 2],
    pub certified: bool,
    pub pruned: bool,
    pub selected: bool,
    /// `"final"` for pruned policies, `"in-loop"` otherwise, `"reference"` for the baseline.
    pub source: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub rows: Vec<ScatterRow>,
    pub pruned_size: usize,
    pub eta: usize,
}

impl Scatter {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("policy_id,rel1,rel2,bound1,bound2,certified,pruned,selected,pruned_size,source\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{}\n",
                r.policy_id,
                r.rel[0],
                r.rel[1],
                r.bound[0],
                r.bound[1],
                r.certified as u8,
                r.pruned as u8,
                r.selected as u8,
                self.pruned_size,
                r.source
            ));
        }
        s
    }
}

/// Scatter coordinates for every policy in the class plus the baseline,
/// from one pruning run. Needs at least two guardrails.
pub fn emit_bounds_scatter(ds: &Dataset, config: &RunConfig) -> Result<Scatter> {
    let p = prepare(ds, config)?;
    if p.spec.len() < 2 {
        return Err(Error::InvalidSpec("the scatter needs two guardrails".into()));
    }
    let cfg = SnplConfig {
        spec: p.spec.clone(),
        hyper: config.hyper.clone(),
        mode: config.mode,
        in_loop: config.in_loop_bound,
        baseline: p.baseline.clone(),
    };
    let trace: SnplTrace = snpl_run(ds, &p.class, &cfg)?;

    let nuisance =
        crate::snpl::fit_for_mode(ds, config.mode, config.hyper.folds, trace.seeds.folds)?;
    let ev = Evaluator::new(ds, p.baseline.as_ref(), &p.spec, crate::snpl::estimator_for(config.mode, &nuisance))?;
    let base = ev.baseline_values();
    let floor = ds.propensity().floor();
    let pruned: HashSet<&str> = trace.pruned.iter().map(String::as_str).collect();

    // relative change at a value `d` of the weighted difference: (d + w V0) / V0
    let rel = |d: f64, j: usize| {
        let v0 = base[j];
        (d + p.spec.guardrails[j].weight * v0) / v0
    };

    let mut rows = vec![ScatterRow {
        policy_id: p.baseline.id().to_string(),
        rel: [0.0, 0.0],
        bound: [0.0, 0.0],
        certified: false,
        pruned: false,
        selected: trace.decision.is_baseline(),
        source: "reference",
    }];
    for (index, policy) in p.class.iter().enumerate() {
        if policy.id() == p.baseline.id() {
            continue;
        }
        let cols = ev.evaluate(policy.as_ref());
        let is_pruned = pruned.contains(policy.id());
        let (bounds, source) = match (&trace.final_bounds, trace.pruned.iter().position(|id| id == policy.id())) {
            (Some(fb), Some(pos)) if is_pruned => (fb.policy_entries(pos).to_vec(), "final"),
            _ => (
                in_loop_bound(&cols, &[], ds.len(), floor, &cfg, trace.budget.alpha_prime, trace.eta, 0)?.entries,
                "in-loop",
            ),
        };
        let certified = bounds.iter().all(|e| e.margin() > 0.0);
        let bound = [rel(bounds[0].bound, 0), rel(bounds[1].bound, 1)];
        rows.push(ScatterRow {
            policy_id: policy.id().to_string(),
            rel: [rel(cols.estimates[0], 0), rel(cols.estimates[1], 1)],
            bound,
            certified,
            pruned: is_pruned,
            selected: trace.decision.class_index == Some(index),
            source,
        });
    }
    Ok(Scatter {
        rows,
        pruned_size: trace.pruned.len(),
        eta: trace.eta,
    })
}

/// `true` when the bound coordinate clears the guardrail (`rel > w`, mirrored for upper sense).
pub fn coordinate_certifies(bound: f64, weight: f64, sense: Sense) -> bool {
    sense.sign() * (bound - weight) > 0.0
}
