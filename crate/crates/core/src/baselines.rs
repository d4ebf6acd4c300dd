//! Comparison learners: sample splitting (select on one part, certify the
//! single winner on the other) and a Bonferroni correction over the whole class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    asymptotic_bounds, bonferroni_normal_bounds_for, finite_bounds_for, LowerBoundTable,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{Evaluator, InfluenceTable, PolicyColumns};
use crate::method::{Decision, Method, SCHEMA_VERSION};
use crate::policy::PolicyRef;
use crate::seed::derive_seed_tag;
use crate::snpl::{estimator_for, fit_for_mode};
use crate::spec::{Hyperparams, Mode, SafetySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub rho: f64,
    pub seed: u64,
    pub learning: Vec<usize>,
    pub testing: Vec<usize>,
}

impl SplitPlan {
    /// Random partition with `floor(rho n)` learning rows.
    pub fn new(n: usize, rho: f64, seed: u64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidArgument(format!("split fraction {rho} not in (0,1)")));
        }
        let n_learn = (rho * n as f64).floor() as usize;
        if n_learn == 0 || n_learn == n {
            return Err(Error::InvalidArgument(format!(
                "split of {n} rows at {rho} leaves an empty part"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut testing = idx.split_off(n_learn);
        let mut learning = idx;
        learning.sort_unstable();
        testing.sort_unstable();
        Ok(Self {
            rho,
            seed,
            learning,
            testing,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub index: usize,
    pub policy_id: String,
    pub min_bound: f64,
    pub goal_estimate: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineTrace {
    pub schema_version: u32,
    pub method: String,
    pub mode: Mode,
    pub spec: SafetySpec,
    pub hyper: Hyperparams,
    pub baseline_id: String,
    pub n: usize,
    pub class_size: usize,
    pub split: Option<SplitPlan>,
    /// Best-scoring candidate (split methods) or best certified one (Bonferroni).
    pub selected: Option<Candidate>,
    pub num_certified: usize,
    /// Certification bounds of `selected`.
    pub final_bounds: Option<LowerBoundTable>,
    pub decision: Decision,
}

impl BaselineTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }
}

fn scanned<'a>(class: &'a [PolicyRef], baseline: &'a PolicyRef) -> impl Iterator<Item = (usize, &'a PolicyRef)> {
    let base = baseline.id();
    class.iter().enumerate().filter(move |(_, p)| p.id() != base)
}

fn candidate(index: usize, cols: &PolicyColumns, table: &LowerBoundTable, score: Option<f64>) -> Candidate {
    let min_bound = table.min_margin(0);
    Candidate {
        index,
        policy_id: cols.id.clone(),
        min_bound,
        goal_estimate: cols.goal_value,
        score: score.unwrap_or(cols.goal_value),
    }
}

/// Selects on the learning split with score `V_g` if every bound clears,
/// else the (negative) minimum margin, then certifies that one policy on
/// the test split at level `alpha`.
#[allow(clippy::too_many_arguments)]
pub fn hcpi_run(
    ds: &Dataset,
    class: &[PolicyRef],
    baseline: &PolicyRef,
    spec: &SafetySpec,
    rho: f64,
    mode: Mode,
    hyper: &Hyperparams,
    method: Method,
) -> Result<BaselineTrace> {
    if class.is_empty() {
        return Err(Error::EmptyPolicyClass);
    }
    hyper.validate()?;
    spec.validate(ds.num_outcomes())?;
    let plan = SplitPlan::new(ds.len(), rho, derive_seed_tag(hyper.seed, "split"))?;
    let floor = ds.propensity().floor();
    let alpha = spec.alpha;
    let learn = ds.subset(&plan.learning);
    let test = ds.subset(&plan.testing);
    if mode == Mode::Asymptotic && (learn.len() < 2 * hyper.folds || test.len() < 2 * hyper.folds) {
        return Err(Error::InvalidArgument(format!(
            "split sizes {}/{} too small for {} folds",
            learn.len(),
            test.len(),
            hyper.folds
        )));
    }

    let nuisance = fit_for_mode(&learn, mode, hyper.folds, derive_seed_tag(hyper.seed, "folds-learn"))?;
    let ev = Evaluator::new(&learn, baseline.as_ref(), spec, estimator_for(mode, &nuisance))?;
    let m = scanned(class, baseline).count();
    let mut best: Option<Candidate> = None;
    for (index, policy) in scanned(class, baseline) {
        let cols = ev.evaluate(policy.as_ref());
        let table = match mode {
            Mode::Finite => finite_bounds_for(&cols, learn.len(), spec, floor, alpha, m)?,
            Mode::Asymptotic => bonferroni_normal_bounds_for(&cols, learn.len(), spec, alpha, spec.len())?,
        };
        let mb = table.min_margin(0);
        let score = if mb >= 0.0 { cols.goal_value } else { mb };
        if best.as_ref().is_none_or(|b| score > b.score) {
            best = Some(candidate(index, &cols, &table, Some(score)));
        }
    }

    let mut trace = BaselineTrace {
        schema_version: SCHEMA_VERSION,
        method: method.tag().into(),
        mode,
        spec: spec.clone(),
        hyper: hyper.clone(),
        baseline_id: baseline.id().to_string(),
        n: ds.len(),
        class_size: class.len(),
        split: None,
        selected: None,
        num_certified: 0,
        final_bounds: None,
        decision: Decision::baseline(baseline.id()),
    };
    let Some(sel) = best else {
        trace.split = Some(plan);
        return Ok(trace);
    };

    let nuisance = fit_for_mode(&test, mode, hyper.folds, derive_seed_tag(hyper.seed, "folds-test"))?;
    let ev = Evaluator::new(&test, baseline.as_ref(), spec, estimator_for(mode, &nuisance))?;
    let cols = ev.evaluate(class[sel.index].as_ref());
    let table = match mode {
        Mode::Finite => finite_bounds_for(&cols, test.len(), spec, floor, alpha, 1)?,
        Mode::Asymptotic => {
            let t = InfluenceTable::from_columns(spec.len(), test.len(), [&cols]);
            asymptotic_bounds(&t, spec, alpha, hyper.n_sim, derive_seed_tag(hyper.seed, "final-supt"))?
        }
    };
    if table.min_margin(0) > 0.0 {
        trace.num_certified = 1;
        trace.decision = Decision {
            policy_id: sel.policy_id.clone(),
            class_index: Some(sel.index),
        };
    }
    trace.selected = Some(sel);
    trace.final_bounds = Some(table);
    trace.split = Some(plan);
    Ok(trace)
}

/// Certifies every policy at per-test level `alpha / (|Pi| |S|)` on the full
/// sample and returns the certified argmax of `V_g`.
pub fn bonferroni_run(
    ds: &Dataset,
    class: &[PolicyRef],
    baseline: &PolicyRef,
    spec: &SafetySpec,
    mode: Mode,
    hyper: &Hyperparams,
) -> Result<BaselineTrace> {
    if class.is_empty() {
        return Err(Error::EmptyPolicyClass);
    }
    hyper.validate()?;
    spec.validate(ds.num_outcomes())?;
    let floor = ds.propensity().floor();
    let n = ds.len();
    let nuisance = fit_for_mode(ds, mode, hyper.folds, derive_seed_tag(hyper.seed, "folds"))?;
    let ev = Evaluator::new(ds, baseline.as_ref(), spec, estimator_for(mode, &nuisance))?;
    let m = scanned(class, baseline).count();

    let mut certified = 0;
    let mut best: Option<(Candidate, LowerBoundTable)> = None;
    for (index, policy) in scanned(class, baseline) {
        let cols = ev.evaluate(policy.as_ref());
        let table = match mode {
            Mode::Finite => finite_bounds_for(&cols, n, spec, floor, spec.alpha, m)?,
            Mode::Asymptotic => bonferroni_normal_bounds_for(&cols, n, spec, spec.alpha, m * spec.len())?,
        };
        if table.min_margin(0) > 0.0 {
            certified += 1;
            if best.as_ref().is_none_or(|(b, _)| cols.goal_value > b.score) {
                best = Some((candidate(index, &cols, &table, None), table));
            }
        }
    }
    let decision = match &best {
        Some((c, _)) => Decision {
            policy_id: c.policy_id.clone(),
            class_index: Some(c.index),
        },
        None => Decision::baseline(baseline.id()),
    };
    let (selected, final_bounds) = best.map_or((None, None), |(c, t)| (Some(c), Some(t)));
    Ok(BaselineTrace {
        schema_version: SCHEMA_VERSION,
        method: Method::Bonferroni.tag().into(),
        mode,
        spec: spec.clone(),
        hyper: hyper.clone(),
        baseline_id: baseline.id().to_string(),
        n,
        class_size: class.len(),
        split: None,
        selected,
        num_certified: certified,
        final_bounds,
        decision,
    })
}
