//! Off-policy value estimation (IPW and cross-fitted doubly-robust) and the
//! per-observation influence terms consumed by the confidence bounds.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nuisance::NuisanceModel;
use crate::policy::Policy;
use crate::spec::SafetySpec;

#[derive(Debug, Clone, Copy)]
pub enum Estimator<'a> {
    Ipw,
    Dr(&'a NuisanceModel),
}

/// Per-row scores `psi_j(O_i, pi)` for each requested (1-indexed) outcome,
/// returned outcome-major.
pub fn psi(ds: &Dataset, policy: &dyn Policy, outcomes: &[usize], est: Estimator<'_>) -> Vec<Vec<f64>> {
    let n = ds.len();
    let k = ds.num_actions();
    let e = ds.propensity();
    let mut out = vec![vec![0.0; n]; outcomes.len()];
    let mut probs = vec![0.0; k];
    for (i, o) in ds.observations().iter().enumerate() {
        policy.fill_probs(&o.covariates, &mut probs);
        let a = o.action;
        let weight = probs[a - 1] / e.prob(i, a);
        for (col, &j) in out.iter_mut().zip(outcomes) {
            let y = o.outcomes[j - 1];
            col[i] = match est {
                Estimator::Ipw => weight * y,
                Estimator::Dr(mu) => {
                    let direct: f64 = (1..=k)
                        .map(|b| probs[b - 1] * mu.prediction(i, b, j))
                        .sum();
                    direct + weight * (y - mu.prediction(i, a, j))
                }
            };
        }
    }
    out
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `(1/n) sum_i sum_k pi(k,X_i) 1[A_i=k] Y_ij / e(k,X_i)`.
pub fn ipw_value(ds: &Dataset, policy: &dyn Policy, outcome: usize) -> f64 {
    mean(&psi(ds, policy, &[outcome], Estimator::Ipw)[0])
}

/// Cross-fitted doubly-robust value of `policy` on `outcome`.
pub fn dr_value(ds: &Dataset, policy: &dyn Policy, outcome: usize, nuisance: &NuisanceModel) -> f64 {
    mean(&psi(ds, policy, &[outcome], Estimator::Dr(nuisance))[0])
}

/// Population-normalized variance `(1/n) sum (x - mean)^2`.
pub fn empirical_variance(column: &[f64]) -> Result<f64> {
    if column.len() < 2 {
        return Err(Error::TooFewObservations(column.len()));
    }
    let m = mean(column);
    Ok(column.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / column.len() as f64)
}

/// Weighted-difference columns `d_j(O_i, pi)` for one policy across the
/// guardrails of a spec, plus its goal-value estimate.
#[derive(Debug, Clone)]
pub struct PolicyColumns {
    pub id: String,
    /// One column per guardrail, in spec order.
    pub columns: Vec<Vec<f64>>,
    /// `D_j(pi)`: column means.
    pub estimates: Vec<f64>,
    pub variances: Vec<f64>,
    /// `V_g(pi)` under the same estimator.
    pub goal_value: f64,
}

/// Scores policies against a fixed baseline. Baseline terms are computed once.
#[derive(Debug)]
pub struct Evaluator<'a> {
    ds: &'a Dataset,
    spec: &'a SafetySpec,
    est: Estimator<'a>,
    outcomes: Vec<usize>,
    baseline_psi: Vec<Vec<f64>>,
    baseline_goal: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        ds: &'a Dataset,
        baseline: &dyn Policy,
        spec: &'a SafetySpec,
        est: Estimator<'a>,
    ) -> Result<Self> {
        spec.validate(ds.num_outcomes())?;
        if ds.len() < 2 {
            return Err(Error::TooFewObservations(ds.len()));
        }
        let mut outcomes: Vec<usize> = spec.guardrails.iter().map(|g| g.outcome).collect();
        outcomes.push(spec.goal);
        let mut base = psi(ds, baseline, &outcomes, est);
        let baseline_goal = mean(&base.pop().expect("goal column"));
        Ok(Self {
            ds,
            spec,
            est,
            outcomes,
            baseline_psi: base,
            baseline_goal,
        })
    }

    pub fn n(&self) -> usize {
        self.ds.len()
    }

    pub fn baseline_goal(&self) -> f64 {
        self.baseline_goal
    }

    /// `V_j(pi0)` for each guardrail.
    pub fn baseline_values(&self) -> Vec<f64> {
        self.baseline_psi.iter().map(|c| mean(c)).collect()
    }

    pub fn evaluate(&self, policy: &dyn Policy) -> PolicyColumns {
        let mut cols = psi(self.ds, policy, &self.outcomes, self.est);
        let goal_value = mean(&cols.pop().expect("goal column"));
        for ((col, base), g) in cols
            .iter_mut()
            .zip(&self.baseline_psi)
            .zip(&self.spec.guardrails)
        {
            let scale = 1.0 + g.weight;
            for (v, b) in col.iter_mut().zip(base) {
                *v -= scale * b;
            }
        }
        let estimates: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
        let variances = cols
            .iter()
            .zip(&estimates)
            .map(|(c, m)| c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / c.len() as f64)
            .collect();
        PolicyColumns {
            id: policy.id().to_string(),
            columns: cols,
            estimates,
            variances,
            goal_value,
        }
    }
}

/// Influence values for a fixed policy list. Column `p * |S| + s` (0-based)
/// holds guardrail `s` of policy `p`.
#[derive(Debug, Clone)]
pub struct InfluenceTable {
    n: usize,
    num_guardrails: usize,
    policy_ids: Vec<String>,
    columns: Vec<Vec<f64>>,
    estimates: Vec<f64>,
    goal_values: Vec<f64>,
}

impl InfluenceTable {
    pub fn from_columns<'c, I>(num_guardrails: usize, n: usize, policies: I) -> Self
    where
        I: IntoIterator<Item = &'c PolicyColumns>,
    {
        let mut t = Self {
            n,
            num_guardrails,
            policy_ids: vec![],
            columns: vec![],
            estimates: vec![],
            goal_values: vec![],
        };
        for p in policies {
            debug_assert_eq!(p.columns.len(), num_guardrails);
            t.policy_ids.push(p.id.clone());
            t.columns.extend(p.columns.iter().cloned());
            t.estimates.extend_from_slice(&p.estimates);
            t.goal_values.push(p.goal_value);
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_policies(&self) -> usize {
        self.policy_ids.len()
    }

    pub fn num_guardrails(&self) -> usize {
        self.num_guardrails
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// 0-based column of (policy `p`, guardrail `s`).
    pub fn index(&self, p: usize, s: usize) -> usize {
        p * self.num_guardrails + s
    }

    pub fn column(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    pub fn estimate(&self, idx: usize) -> f64 {
        self.estimates[idx]
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn policy_ids(&self) -> &[String] {
        &self.policy_ids
    }

    pub fn goal_values(&self) -> &[f64] {
        &self.goal_values
    }

    pub fn variance(&self, idx: usize) -> Result<f64> {
        empirical_variance(&self.columns[idx])
    }
}

pub fn influence_table(
    ds: &Dataset,
    policies: &[&dyn Policy],
    baseline: &dyn Policy,
    spec: &SafetySpec,
    est: Estimator<'_>,
) -> Result<InfluenceTable> {
    let ev = Evaluator::new(ds, baseline, spec, est)?;
    let cols: Vec<PolicyColumns> = policies.iter().map(|p| ev.evaluate(*p)).collect();
    Ok(InfluenceTable::from_columns(spec.len(), ds.len(), &cols))
}

/// Population-normalized covariance of every pair of table columns.
pub fn empirical_covariance(table: &InfluenceTable) -> Result<DMatrix<f64>> {
    let n = table.n();
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    let m = table.num_columns();
    let centered = DMatrix::from_fn(n, m, |i, c| table.columns[c][i] - table.estimates[c]);
    let mut cov = centered.tr_mul(&centered) / n as f64;
    // Exact symmetry regardless of summation order.
    for a in 0..m {
        for b in 0..a {
            let v = 0.5 * (cov[(a, b)] + cov[(b, a)]);
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}
