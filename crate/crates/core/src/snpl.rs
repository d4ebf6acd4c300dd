//! Noisy safe policy learning: a sparse-vector scan over the class prunes it to
//! at most `eta` candidates, which are then jointly re-certified at the
//! deflated level `alpha'` and the best certified one is returned.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    asymptotic_bounds, bonferroni_normal_bounds_for, finite_bounds, finite_bounds_for, LowerBoundTable,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::estimators::{Estimator, Evaluator, InfluenceTable, PolicyColumns};
use crate::method::{Decision, SCHEMA_VERSION};
use crate::nuisance::{fit_nuisance, NuisanceModel};
use crate::policy::PolicyRef;
use crate::seed::{derive_seed, derive_seed_tag};
use crate::spec::{Hyperparams, Mode, SafetySpec};
use crate::stability::{eta_heuristic, laplace, xi, SensitivityConstants, StabilityBudget};

/// In-loop bound construction for asymptotic mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InLoopBound {
    /// Normal quantile at `alpha' / (eta |S|)` per coordinate.
    #[default]
    BonferroniNormal,
    /// Sup-t over the current pruned set plus the candidate.
    Supt,
}

#[derive(Debug, Clone)]
pub struct SnplConfig {
    pub spec: SafetySpec,
    pub hyper: Hyperparams,
    pub mode: Mode,
    pub in_loop: InLoopBound,
    pub baseline: PolicyRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    /// Position in the declared class.
    pub index: usize,
    pub policy_id: String,
    /// Minimum in-loop margin `M'(pi)`.
    pub min_bound: f64,
    pub noise: f64,
    pub admitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnplSeeds {
    pub master: u64,
    pub folds: u64,
    pub noise: u64,
    pub in_loop_supt: u64,
    pub final_supt: u64,
}

impl SnplSeeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            folds: derive_seed_tag(master, "folds"),
            noise: derive_seed_tag(master, "noise"),
            in_loop_supt: derive_seed_tag(master, "in-loop-supt"),
            final_supt: derive_seed_tag(master, "final-supt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnplTrace {
    pub schema_version: u32,
    pub method: String,
    pub mode: Mode,
    pub in_loop_bound: InLoopBound,
    pub spec: SafetySpec,
    pub hyper: Hyperparams,
    pub baseline_id: String,
    pub n: usize,
    pub class_size: usize,
    pub budget: StabilityBudget,
    pub sensitivity: SensitivityConstants,
    pub eta: usize,
    pub threshold_scale: f64,
    pub score_scale: f64,
    /// The single noisy threshold `v`.
    pub threshold: f64,
    pub scans: Vec<ScanRecord>,
    pub pruned: Vec<String>,
    pub pruned_indices: Vec<usize>,
    pub final_bounds: Option<LowerBoundTable>,
    /// `V_g` estimates of the pruned policies, in scan order.
    pub goal_estimates: Vec<f64>,
    pub baseline_goal: f64,
    pub certified: Vec<String>,
    pub decision: Decision,
    pub seeds: SnplSeeds,
}

impl SnplTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces serialize")
    }
}

/// Outcome of re-certifying a pruned set.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub bounds: Option<LowerBoundTable>,
    /// Positions (within the pruned set) with every margin `> 0`.
    pub certified: Vec<usize>,
    /// Certified position with the largest goal estimate; earliest wins ties.
    pub chosen: Option<usize>,
}

pub(crate) fn estimator_for<'a>(mode: Mode, nuisance: &'a Option<NuisanceModel>) -> Estimator<'a> {
    match (mode, nuisance) {
        (Mode::Asymptotic, Some(m)) => Estimator::Dr(m),
        _ => Estimator::Ipw,
    }
}

pub(crate) fn fit_for_mode(ds: &Dataset, mode: Mode, folds: usize, seed: u64) -> Result<Option<NuisanceModel>> {
    match mode {
        Mode::Finite => Ok(None),
        Mode::Asymptotic => {
            if ds.len() < folds {
                return Err(Error::InvalidArgument(format!(
                    "{} rows cannot be split into {folds} folds",
                    ds.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            fit_nuisance(ds, folds, &mut rng).map(Some)
        }
    }
}

/// Per-guardrail bounds for one scanned candidate at level `alpha'`.
#[allow(clippy::too_many_arguments)]
pub fn in_loop_bound(
    cols: &PolicyColumns,
    pruned: &[PolicyColumns],
    n: usize,
    floor: f64,
    config: &SnplConfig,
    alpha_prime: f64,
    eta: usize,
    seed: u64,
) -> Result<LowerBoundTable> {
    let spec = &config.spec;
    match (config.mode, config.in_loop) {
        (Mode::Finite, _) => finite_bounds_for(cols, n, spec, floor, alpha_prime, eta),
        (Mode::Asymptotic, InLoopBound::BonferroniNormal) => {
            bonferroni_normal_bounds_for(cols, n, spec, alpha_prime, eta * spec.len())
        }
        (Mode::Asymptotic, InLoopBound::Supt) => {
            let table = InfluenceTable::from_columns(spec.len(), n, pruned.iter().chain(std::iter::once(cols)));
            let all = asymptotic_bounds(&table, spec, alpha_prime, config.hyper.n_sim_in_loop, seed)?;
            let last = table.num_policies() - 1;
            Ok(LowerBoundTable {
                entries: all.policy_entries(last).to_vec(),
                ..all
            })
        }
    }
}

/// Joint bounds over exactly the pruned set at `level`, then the argmax rule.
pub fn final_certify(
    pruned: &[PolicyColumns],
    n: usize,
    floor: f64,
    config: &SnplConfig,
    level: f64,
    seed: u64,
) -> Result<Certification> {
    if pruned.is_empty() {
        return Ok(Certification {
            bounds: None,
            certified: vec![],
            chosen: None,
        });
    }
    let spec = &config.spec;
    let table = InfluenceTable::from_columns(spec.len(), n, pruned);
    let bounds = match config.mode {
        Mode::Finite => finite_bounds(&table, spec, floor, level, pruned.len())?,
        Mode::Asymptotic => asymptotic_bounds(&table, spec, level, config.hyper.n_sim, seed)?,
    };
    let certified: Vec<usize> = (0..pruned.len()).filter(|&p| bounds.min_margin(p) > 0.0).collect();
    let chosen = select_best(certified.iter().map(|&p| (p, pruned[p].goal_value)));
    Ok(Certification {
        bounds: Some(bounds),
        certified,
        chosen,
    })
}

/// Largest score; the first of equal scores wins.
pub(crate) fn select_best<I: IntoIterator<Item = (usize, f64)>>(candidates: I) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in candidates {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

pub fn snpl_run(ds: &Dataset, class: &[PolicyRef], config: &SnplConfig) -> Result<SnplTrace> {
    if class.is_empty() {
        return Err(Error::EmptyPolicyClass);
    }
    let spec = &config.spec;
    let hyper = &config.hyper;
    hyper.validate()?;
    spec.validate(ds.num_outcomes())?;
    let n = ds.len();
    let s = spec.len();
    let floor = ds.propensity().floor();
    let seeds = SnplSeeds::from_master(hyper.seed);

    let budget = StabilityBudget::new(spec.alpha, hyper.gamma, n)?;
    let ap = budget.alpha_prime;
    let eta = hyper
        .eta
        .unwrap_or_else(|| eta_heuristic(spec.alpha, ap, class.len(), s, hyper.p));
    let sens = SensitivityConstants::new(
        config.mode,
        n,
        xi(spec.max_weight(), floor),
        ap,
        eta,
        s,
        hyper.sensitivity,
    )?;
    let threshold_scale = 2.0 * sens.b * eta as f64 / budget.epsilon;
    let score_scale = 4.0 * sens.b * eta as f64 / budget.epsilon;

    let nuisance = fit_for_mode(ds, config.mode, hyper.folds, seeds.folds)?;
    let ev = Evaluator::new(ds, config.baseline.as_ref(), spec, estimator_for(config.mode, &nuisance))?;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seeds.noise);
    let threshold = laplace(threshold_scale, &mut noise_rng)?;

    let base_id = config.baseline.id();
    let mut scans = Vec::new();
    let mut pruned: Vec<PolicyColumns> = Vec::with_capacity(eta);
    let mut pruned_indices = Vec::with_capacity(eta);
    for (index, policy) in class.iter().enumerate() {
        if pruned.len() >= eta {
            break;
        }
        if policy.id() == base_id {
            continue;
        }
        let cols = ev.evaluate(policy.as_ref());
        let table = in_loop_bound(
            &cols,
            &pruned,
            n,
            floor,
            config,
            ap,
            eta,
            derive_seed(seeds.in_loop_supt, index as u64),
        )?;
        let min_bound = table.min_margin(0);
        let noise = laplace(score_scale, &mut noise_rng)?;
        let admitted = min_bound + noise > threshold;
        scans.push(ScanRecord {
            index,
            policy_id: cols.id.clone(),
            min_bound,
            noise,
            admitted,
        });
        if admitted {
            pruned.push(cols);
            pruned_indices.push(index);
        }
    }

    let cert = final_certify(&pruned, n, floor, config, ap, seeds.final_supt)?;
    let decision = match cert.chosen {
        Some(p) => Decision {
            policy_id: pruned[p].id.clone(),
            class_index: Some(pruned_indices[p]),
        },
        None => Decision::baseline(base_id),
    };
    log::debug!(
        "snpl: scanned {}, pruned {}, certified {}, decision {}",
        scans.len(),
        pruned.len(),
        cert.certified.len(),
        decision.policy_id
    );

    Ok(SnplTrace {
        schema_version: SCHEMA_VERSION,
        method: "snpl".into(),
        mode: config.mode,
        in_loop_bound: config.in_loop,
        spec: spec.clone(),
        hyper: hyper.clone(),
        baseline_id: base_id.to_string(),
        n,
        class_size: class.len(),
        budget,
        sensitivity: sens,
        eta,
        threshold_scale,
        score_scale,
        threshold,
        scans,
        pruned: pruned.iter().map(|c| c.id.clone()).collect(),
        pruned_indices,
        final_bounds: cert.bounds,
        goal_estimates: pruned.iter().map(|c| c.goal_value).collect(),
        baseline_goal: ev.baseline_goal(),
        certified: cert.certified.iter().map(|&p| pruned[p].id.clone()).collect(),
        decision,
        seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, as_policy_refs};
    use std::sync::Arc;

    fn config(mode: Mode, seed: u64) -> SnplConfig {
        SnplConfig {
            spec: SafetySpec::new(1, &[1, 2], &[0.0, -0.1], 0.1).unwrap(),
            hyper: Hyperparams {
                seed,
                n_sim: 2_000,
                n_sim_in_loop: 500,
                ..Hyperparams::default()
            },
            mode,
            in_loop: InLoopBound::BonferroniNormal,
            baseline: Arc::new(synthetic::baseline()),
        }
    }

    fn hand_columns(id: &str, estimates: &[f64], goal: f64, n: usize) -> PolicyColumns {
        PolicyColumns {
            id: id.into(),
            columns: estimates.iter().map(|&e| vec![e; n]).collect(),
            estimates: estimates.to_vec(),
            variances: vec![0.0; estimates.len()],
            goal_value: goal,
        }
    }

    #[test]
    fn baseline_only_class_returns_baseline() {
        let ds = synthetic::generate(200, &mut ChaCha8Rng::seed_from_u64(1));
        let cfg = config(Mode::Finite, 1);
        let class = vec![cfg.baseline.clone()];
        let t = snpl_run(&ds, &class, &cfg).unwrap();
        assert!(t.decision.is_baseline());
        assert!(t.pruned.is_empty() && t.scans.is_empty());
    }

    #[test]
    fn empty_class_is_an_error() {
        let ds = synthetic::generate(50, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(snpl_run(&ds, &[], &config(Mode::Finite, 0)).unwrap_err(), Error::EmptyPolicyClass);
    }

    #[test]
    fn argmax_and_strict_boundary() {
        let cfg = config(Mode::Asymptotic, 0);
        let a = hand_columns("a", &[0.2, 0.2], 0.40, 20);
        let b = hand_columns("b", &[0.2, 0.2], 0.41, 20);
        let c = final_certify(&[a.clone(), b], 20, 0.5, &cfg, 0.08, 1).unwrap();
        assert_eq!(c.chosen, Some(1));

        let tiny = hand_columns("tiny", &[1e-9, 1e-9], 0.3, 20);
        let c = final_certify(&[tiny], 20, 0.5, &cfg, 0.08, 1).unwrap();
        assert_eq!(c.chosen, Some(0));
        let zero = hand_columns("zero", &[0.0, 1.0], 0.9, 20);
        let c = final_certify(&[zero], 20, 0.5, &cfg, 0.08, 1).unwrap();
        assert_eq!(c.chosen, None);

        let c = final_certify(&[], 20, 0.5, &cfg, 0.08, 1).unwrap();
        assert!(c.bounds.is_none() && c.chosen.is_none());
    }

    #[test]
    fn ties_go_to_scan_order() {
        assert_eq!(select_best([(0, 0.5), (1, 0.5)]), Some(0));
        assert_eq!(select_best([(3, 0.1), (1, 0.5), (2, 0.5)]), Some(1));
        assert_eq!(select_best(std::iter::empty()), None);
    }

    #[test]
    fn bonferroni_normal_in_loop_quantile() {
        let mut cfg = config(Mode::Asymptotic, 0);
        cfg.in_loop = InLoopBound::BonferroniNormal;
        let cols = hand_columns("p", &[0.1, 0.1], 0.5, 10);
        let t = in_loop_bound(&cols, &[], 10, 0.5, &cfg, 0.08, 10, 0).unwrap();
        match t.correction {
            crate::bounds::Correction::Bonferroni { quantile, tests } => {
                assert_eq!(tests, 20);
                assert!((quantile - 2.652).abs() < 0.005);
            }
            ref c => panic!("{c:?}"),
        }
    }

    #[test]
    fn finite_in_loop_uses_eta_class_size() {
        let cfg = config(Mode::Finite, 0);
        let cols = hand_columns("p", &[0.1, 0.1], 0.5, 10);
        let t = in_loop_bound(&cols, &[], 10, 0.5, &cfg, 0.08, 10, 0).unwrap();
        match t.correction {
            crate::bounds::Correction::Bernstein { class_size, log_term, .. } => {
                assert_eq!(class_size, 10);
                assert!((log_term - (3.0 * 10.0 * 2.0 / (2.0 * 0.08f64)).ln()).abs() < 1e-12);
            }
            ref c => panic!("{c:?}"),
        }
    }

    #[test]
    fn supt_in_loop_with_empty_pruned_set_covers_candidate_only() {
        let mut cfg = config(Mode::Asymptotic, 0);
        cfg.in_loop = InLoopBound::Supt;
        let ds = synthetic::generate(300, &mut ChaCha8Rng::seed_from_u64(4));
        let ev = Evaluator::new(&ds, cfg.baseline.as_ref(), &cfg.spec, Estimator::Ipw).unwrap();
        let cols = ev.evaluate(&synthetic::ThresholdPolicy::new(synthetic::Feature::G2, 0.3));
        let t = in_loop_bound(&cols, &[], 300, 0.5, &cfg, 0.08, 10, 7).unwrap();
        assert_eq!(t.entries.len(), 2);
        match t.correction {
            crate::bounds::Correction::SupT { dims, .. } => assert_eq!(dims, 2),
            ref c => panic!("{c:?}"),
        }
    }

    #[test]
    fn trace_respects_eta_and_is_deterministic() {
        let ds = synthetic::generate(400, &mut ChaCha8Rng::seed_from_u64(9));
        let class = as_policy_refs(&synthetic::build_class(20));
        for mode in [Mode::Finite, Mode::Asymptotic] {
            let cfg = config(mode, 5);
            let a = snpl_run(&ds, &class, &cfg).unwrap();
            let b = snpl_run(&ds, &class, &cfg).unwrap();
            assert_eq!(a.to_json(), b.to_json());
            assert!(a.pruned.len() <= a.eta);
            assert_eq!(a.scans.iter().filter(|s| s.admitted).count(), a.pruned.len());
        }
    }

    #[test]
    fn sensitivity_below_floor_rejected() {
        let ds = synthetic::generate(200, &mut ChaCha8Rng::seed_from_u64(2));
        let class = as_policy_refs(&synthetic::build_class(10));
        let mut cfg = config(Mode::Finite, 0);
        let floor = snpl_run(&ds, &class, &cfg).unwrap().sensitivity.floor;
        cfg.hyper.sensitivity = Some(floor * 0.99);
        assert!(matches!(
            snpl_run(&ds, &class, &cfg),
            Err(Error::SensitivityBelowFloor { .. })
        ));
        cfg.hyper.sensitivity = Some(floor * 2.0);
        assert_eq!(snpl_run(&ds, &class, &cfg).unwrap().sensitivity.b, floor * 2.0);
    }
}
