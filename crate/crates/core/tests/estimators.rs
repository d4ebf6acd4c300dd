mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snpl::estimators::{dr_value, ipw_value, mean, psi, Estimator};
use snpl::nuisance::{fit_nuisance, NuisanceModel};
use snpl::policy::{ConstantPolicy, UniformPolicy};
use snpl::synthetic::{self, Feature, ThresholdPolicy};
use snpl::{Dataset, Observation, PropensityModel};

fn random_dataset(rows: &[(f64, f64, bool, bool, bool)], p_treat: f64) -> Dataset {
    let obs = rows
        .iter()
        .map(|&(x1, x2, a, y1, y2)| {
            Observation::new(vec![x1, x2], if a { 1 } else { 2 }, vec![y1 as u8 as f64, y2 as u8 as f64])
        })
        .collect();
    let e = PropensityModel::constant(vec![p_treat, 1.0 - p_treat], p_treat.min(1.0 - p_treat)).unwrap();
    Dataset::new(obs, 2, e).unwrap()
}

proptest! {
    #[test]
    fn dr_with_zero_regression_is_ipw(
        rows in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, any::<bool>(), any::<bool>(), any::<bool>()), 2..60),
        p in 0.1..0.9f64,
    ) {
        let ds = random_dataset(&rows, p);
        let mu = NuisanceModel::zero(&ds);
        for policy in [ConstantPolicy::new(1, 2).unwrap(), ConstantPolicy::new(2, 2).unwrap()] {
            for j in 1..=2 {
                let a = ipw_value(&ds, &policy, j);
                let b = dr_value(&ds, &policy, j, &mu);
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ipw_under_logging_policy_is_sample_mean(
        rows in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, any::<bool>(), any::<bool>(), any::<bool>()), 2..60),
    ) {
        // logging policy is uniform, matching propensities of 1/2
        let ds = random_dataset(&rows, 0.5);
        for j in 1..=2 {
            let ys: Vec<f64> = ds.observations().iter().map(|o| o.outcomes[j - 1]).collect();
            prop_assert!((ipw_value(&ds, &UniformPolicy::new(2), j) - mean(&ys)).abs() <= 1e-12);
        }
    }
}

#[test]
fn zero_regression_identity_on_synthetic_policies() {
    let ds = synthetic::generate(5_000, &mut ChaCha8Rng::seed_from_u64(8));
    let mu = NuisanceModel::zero(&ds);
    for p in synthetic::build_class(7) {
        let a = psi(&ds, &p, &[1, 2], Estimator::Ipw);
        let b = psi(&ds, &p, &[1, 2], Estimator::Dr(&mu));
        for (ca, cb) in a.iter().zip(&b) {
            assert_abs_diff_eq!(mean(ca), mean(cb), epsilon = 1e-12);
        }
    }
}

#[test]
fn dr_recovers_true_values_at_large_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let ds = synthetic::generate(100_000, &mut rng);
    let mu = fit_nuisance(&ds, 5, &mut rng).unwrap();
    let base = synthetic::baseline();
    let treat = ConstantPolicy::new(1, 2).unwrap();
    // oracle truths of the outcome model, by direct integration
    let cases: [(&dyn snpl::Policy, [f64; 2]); 2] = [(&base, [0.375, 0.53125]), (&treat, [0.25, 0.625])];
    for (p, truth) in cases {
        for j in 1..=2 {
            let v = dr_value(&ds, p, j, &mu);
            assert_abs_diff_eq!(v, truth[j - 1], epsilon = 0.01);
        }
    }
}

#[test]
fn ipw_is_consistent_on_threshold_policies() {
    let ds = synthetic::generate(200_000, &mut ChaCha8Rng::seed_from_u64(5));
    for p in [ThresholdPolicy::new(Feature::G3, 0.3), ThresholdPolicy::new(Feature::G4, 0.1)] {
        let (v1, v2) = p.true_values();
        assert_abs_diff_eq!(ipw_value(&ds, &p, 1), v1, epsilon = 0.01);
        assert_abs_diff_eq!(ipw_value(&ds, &p, 2), v2, epsilon = 0.01);
    }
}
