//! Independent oracles shared by the integration suites and the acceptance
//! gate. Nothing here calls the library routine it is used to check.
#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use snpl::bounds::{asymptotic_bounds, finite_bounds, Correction};
use snpl::estimators::{influence_table, Estimator};
use snpl::nuisance::fit_nuisance;
use snpl::policy::Policy;
use snpl::synthetic::{self, Feature, ThresholdPolicy};
use snpl::{PolicyRef, SafetySpec};

pub fn phi_inv(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// `(alpha - delta) exp(-(n/2) eps^2 - eps sqrt(n log(2/delta) / 2))`,
/// restated here so the oracle does not share code with the library.
pub fn alpha_prime_formula(alpha: f64, delta: f64, n: f64, eps: f64) -> f64 {
    (alpha - delta) * (-(n * eps * eps / 2.0) - eps * (n * (2.0 / delta).ln() / 2.0).sqrt()).exp()
}

/// `max_delta alpha'(delta) / alpha` on a 10^6-point log grid over
/// `(alpha 1e-7, alpha)`, with `n = 1`, `eps = gamma`.
pub fn brute_level_ratio(alpha: f64, gamma: f64) -> f64 {
    const POINTS: usize = 1_000_000;
    let (lo, hi) = ((alpha * 1e-7).ln(), (alpha * (1.0 - 1e-9)).ln());
    (0..POINTS)
        .map(|i| {
            let d = (lo + (hi - lo) * i as f64 / (POINTS - 1) as f64).exp();
            alpha_prime_formula(alpha, d, 1.0, gamma)
        })
        .fold(f64::NEG_INFINITY, f64::max)
        / alpha
}

/// One Monte Carlo estimate of a policy value with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McValue {
    pub v: [f64; 2],
    pub se: [f64; 2],
}

/// Monte Carlo values of `1[feature(x) < c]` for every cutoff in `cutoffs`
/// (ascending), from `samples` uniform covariate draws. Uses the outcome
/// means directly: `V1 = E[0.5 (1 - T X2)]`, `V2 = E[0.5 (1 + T X1 X3)]`.
pub fn mc_values(feature: Feature, cutoffs: &[f64], samples: usize, seed: u64) -> Vec<McValue> {
    let g = |x: &[f64; 3]| match feature {
        Feature::G1 => x[0],
        Feature::G2 => x[1],
        Feature::G3 => x[0] * x[1],
        Feature::G4 => x[0] * x[1] * x[2],
        Feature::G5 => -x[0] * x[1] * x[2],
    };
    // bin b = number of cutoffs <= g(x); cutoff i treats x iff b <= i
    let bins = cutoffs.len() + 1;
    let mut s1 = vec![0.0; bins];
    let mut s11 = vec![0.0; bins];
    let mut s2 = vec![0.0; bins];
    let mut s22 = vec![0.0; bins];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let key = g(&x);
        let b = cutoffs.partition_point(|c| *c <= key);
        // per-unit contributions relative to never-treat
        let d1 = -0.5 * x[1];
        let d2 = 0.5 * x[0] * x[2];
        s1[b] += d1;
        s11[b] += d1 * d1;
        s2[b] += d2;
        s22[b] += d2 * d2;
    }
    let n = samples as f64;
    let (mut c1, mut c11, mut c2, mut c22) = (0.0, 0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(cutoffs.len());
    for i in 0..cutoffs.len() {
        c1 += s1[i];
        c11 += s11[i];
        c2 += s2[i];
        c22 += s22[i];
        let m1 = c1 / n;
        let m2 = c2 / n;
        let se1 = ((c11 / n - m1 * m1).max(0.0) / n).sqrt();
        let se2 = ((c22 / n - m2 * m2).max(0.0) / n).sqrt();
        out.push(McValue {
            v: [0.5 + m1, 0.5 + m2],
            se: [se1, se2],
        });
    }
    out
}

/// The spec used throughout the property suites: goal 1, guardrails {1,2},
/// weights (0, -0.1), alpha 0.1.
pub fn default_spec() -> SafetySpec {
    SafetySpec::new(1, &[1, 2], &[0.0, -0.1], 0.1).unwrap()
}

/// Twenty distinct threshold policies, four per feature.
pub fn twenty_policies() -> Vec<ThresholdPolicy> {
    let mut v = Vec::new();
    for f in Feature::ALL {
        let cuts: [f64; 4] = if f == Feature::G5 {
            [-0.8, -0.4, -0.1, -0.02]
        } else {
            [0.2, 0.4, 0.6, 0.8]
        };
        for c in cuts {
            v.push(ThresholdPolicy::new(f, c));
        }
    }
    v
}

/// True weighted differences `V_j(pi) - (1+w_j) V_j(pi0)`, policy-major.
pub fn true_differences(policies: &[ThresholdPolicy], spec: &SafetySpec) -> Vec<f64> {
    let (b1, b2) = synthetic::baseline().true_values();
    let base = [b1, b2];
    let mut out = Vec::new();
    for p in policies {
        let (v1, v2) = p.true_values();
        let v = [v1, v2];
        for g in &spec.guardrails {
            out.push(v[g.outcome - 1] - (1.0 + g.weight) * base[g.outcome - 1]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct CoverageSummary {
    pub reps: usize,
    pub finite_miss: f64,
    pub supt_miss: f64,
    /// Largest `|z*| - Phi^{-1}(1 - alpha / m)` seen across replications.
    pub max_supt_excess: f64,
}

/// Replicated joint-coverage experiment over [`twenty_policies`]. Finite
/// bounds use IPW on `n_finite` rows; sup-t bounds use cross-fitted DR on
/// `n_asymp` rows.
pub fn coverage_experiment(reps: usize, n_finite: usize, n_asymp: usize, n_sim: usize, seed: u64) -> CoverageSummary {
    let spec = default_spec();
    let class = twenty_policies();
    let truth = true_differences(&class, &spec);
    let refs: Vec<&dyn Policy> = class.iter().map(|p| p as &dyn Policy).collect();
    let base = synthetic::baseline();
    let m = truth.len();
    let q_bonf = phi_inv(1.0 - spec.alpha / m as f64);

    let results: Vec<(bool, bool, f64)> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let ds = synthetic::generate(n_finite, &mut rng);
            let t = influence_table(&ds, &refs, &base, &spec, Estimator::Ipw).unwrap();
            let fb = finite_bounds(&t, &spec, ds.propensity().floor(), spec.alpha, class.len()).unwrap();
            let finite_miss = fb.entries.iter().zip(&truth).any(|(e, d)| e.bound > *d);

            let ds = synthetic::generate(n_asymp, &mut rng);
            let mu = fit_nuisance(&ds, 5, &mut rng).unwrap();
            let t = influence_table(&ds, &refs, &base, &spec, Estimator::Dr(&mu)).unwrap();
            let ab = asymptotic_bounds(&t, &spec, spec.alpha, n_sim, seed ^ r as u64).unwrap();
            let supt_miss = ab.entries.iter().zip(&truth).any(|(e, d)| e.bound > *d);
            let z = match ab.correction {
                Correction::SupT { z_star, .. } => z_star.abs(),
                _ => unreachable!(),
            };
            (finite_miss, supt_miss, z - q_bonf)
        })
        .collect();
    let frac = |k: usize| results.iter().filter(|r| if k == 0 { r.0 } else { r.1 }).count() as f64 / reps as f64;
    CoverageSummary {
        reps,
        finite_miss: frac(0),
        supt_miss: frac(1),
        max_supt_excess: results.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn policy_refs(class: &[ThresholdPolicy]) -> Vec<PolicyRef> {
    class.iter().map(|p| Arc::new(p.clone()) as PolicyRef).collect()
}
