//! Joint confidence bounds on weighted policy-value differences
//! `D_j(pi) = V_j(pi) - (1 + w_j) V_j(pi0)`.
//!
//! Three constructions share one output table:
//! - empirical Bernstein with a union bound over `|Pi| x |S|` (valid for every n),
//! - sup-t bands from the empirical covariance of the influence columns,
//! - per-coordinate normal quantiles with a Bonferroni split.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{empirical_covariance, InfluenceTable, PolicyColumns};
use crate::normal;
use crate::seed::derive_seed;
use crate::spec::{Sense, SafetySpec};

const SHARD: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Finite,
    Asymptotic,
    BonferroniNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Correction {
    Bernstein {
        class_size: usize,
        num_guardrails: usize,
        log_term: f64,
    },
    SupT {
        z_star: f64,
        n_sim: usize,
        dims: usize,
        seed: u64,
    },
    Bonferroni {
        quantile: f64,
        tests: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    /// 0-based position of the policy within the bounded set.
    pub policy: usize,
    pub policy_id: String,
    /// 1-indexed guardrail outcome.
    pub outcome: usize,
    pub sense: Sense,
    pub estimate: f64,
    pub width: f64,
    pub bound: f64,
}

impl BoundEntry {
    fn new(policy: usize, policy_id: &str, outcome: usize, sense: Sense, estimate: f64, width: f64) -> Self {
        Self {
            policy,
            policy_id: policy_id.to_string(),
            outcome,
            sense,
            estimate,
            width,
            bound: estimate - sense.sign() * width,
        }
    }

    /// Positive exactly when this guardrail is certified.
    pub fn margin(&self) -> f64 {
        self.sense.sign() * self.bound
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundTable {
    pub level: f64,
    pub method: BoundMethod,
    pub correction: Correction,
    pub num_guardrails: usize,
    pub entries: Vec<BoundEntry>,
}

impl LowerBoundTable {
    pub fn num_policies(&self) -> usize {
        self.entries.len() / self.num_guardrails.max(1)
    }

    pub fn entry(&self, policy: usize, guardrail: usize) -> &BoundEntry {
        &self.entries[policy * self.num_guardrails + guardrail]
    }

    pub fn policy_entries(&self, policy: usize) -> &[BoundEntry] {
        let s = self.num_guardrails;
        &self.entries[policy * s..(policy + 1) * s]
    }

    /// `min_j` margin for one policy; certified iff `> 0`.
    pub fn min_margin(&self, policy: usize) -> f64 {
        self.policy_entries(policy)
            .iter()
            .map(BoundEntry::margin)
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level {level} not in (0,1)")));
    }
    Ok(())
}

/// `log(3 |Pi| |S| / (2 level))`, the union-bound term of the Bernstein width.
pub fn bernstein_log_term(level: f64, class_size: usize, num_guardrails: usize) -> Result<f64> {
    check_level(level)?;
    let arg = 3.0 * class_size as f64 * num_guardrails as f64 / (2.0 * level);
    let l = arg.ln();
    if !l.is_finite() || class_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "Bernstein log term not finite for level {level}, class size {class_size}"
        )));
    }
    Ok(l)
}

/// `sigma sqrt(2 L / n) + 3 R L / n` with `R = (2 + w) / c`.
pub fn bernstein_width(sd: f64, n: usize, log_term: f64, weight: f64, floor: f64) -> f64 {
    let nf = n as f64;
    let range = (2.0 + weight) / floor;
    sd * (2.0 * log_term / nf).sqrt() + 3.0 * range * log_term / nf
}

/// Empirical Bernstein bounds for every (policy, guardrail) of `table`,
/// union-bounded as if the policy set had `class_size` members.
pub fn finite_bounds(
    table: &InfluenceTable,
    spec: &SafetySpec,
    floor: f64,
    level: f64,
    class_size: usize,
) -> Result<LowerBoundTable> {
    if table.n() < 2 {
        return Err(Error::TooFewObservations(table.n()));
    }
    let s = spec.len();
    let log_term = bernstein_log_term(level, class_size, s)?;
    let mut entries = Vec::with_capacity(table.num_columns());
    for (p, id) in table.policy_ids().iter().enumerate() {
        for (j, g) in spec.guardrails.iter().enumerate() {
            let idx = table.index(p, j);
            let sd = table.variance(idx)?.sqrt();
            let width = bernstein_width(sd, table.n(), log_term, g.weight, floor);
            entries.push(BoundEntry::new(p, id, g.outcome, g.sense, table.estimate(idx), width));
        }
    }
    Ok(LowerBoundTable {
        level,
        method: BoundMethod::Finite,
        correction: Correction::Bernstein {
            class_size,
            num_guardrails: s,
            log_term,
        },
        num_guardrails: s,
        entries,
    })
}

/// Bernstein bounds for a single policy's columns.
pub fn finite_bounds_for(
    cols: &PolicyColumns,
    n: usize,
    spec: &SafetySpec,
    floor: f64,
    level: f64,
    class_size: usize,
) -> Result<LowerBoundTable> {
    let s = spec.len();
    let log_term = bernstein_log_term(level, class_size, s)?;
    let entries = spec
        .guardrails
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let width = bernstein_width(cols.variances[j].sqrt(), n, log_term, g.weight, floor);
            BoundEntry::new(0, &cols.id, g.outcome, g.sense, cols.estimates[j], width)
        })
        .collect();
    Ok(LowerBoundTable {
        level,
        method: BoundMethod::Finite,
        correction: Correction::Bernstein {
            class_size,
            num_guardrails: s,
            log_term,
        },
        num_guardrails: s,
        entries,
    })
}

/// Normal-quantile bounds at per-test level `level / tests` for one policy.
pub fn bonferroni_normal_bounds_for(
    cols: &PolicyColumns,
    n: usize,
    spec: &SafetySpec,
    level: f64,
    tests: usize,
) -> Result<LowerBoundTable> {
    check_level(level)?;
    let q = normal::inverse_cdf(1.0 - level / tests as f64)?;
    let nf = n as f64;
    let entries = spec
        .guardrails
        .iter()
        .enumerate()
        .map(|(j, g)| {
            let width = q * (cols.variances[j] / nf).sqrt();
            BoundEntry::new(0, &cols.id, g.outcome, g.sense, cols.estimates[j], width)
        })
        .collect();
    Ok(LowerBoundTable {
        level,
        method: BoundMethod::BonferroniNormal,
        correction: Correction::Bonferroni { quantile: q, tests },
        num_guardrails: spec.len(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupTQuantile {
    pub z_star: f64,
    pub n_sim: usize,
    pub seed: u64,
}

/// Lower `level`-quantile of `min_j Sigma_jj^{-1/2} rho_j`, `rho ~ N(0, Sigma)`.
pub fn supt_quantile(cov: &DMatrix<f64>, level: f64, n_sim: usize, seed: u64) -> Result<SupTQuantile> {
    let signs = vec![1.0; cov.nrows()];
    supt_quantile_signed(cov, &signs, level, n_sim, seed)
}

/// As [`supt_quantile`], with coordinate `j` multiplied by `signs[j]` before
/// the minimum. Upper-sense coordinates carry `-1`, giving one joint band
/// over mixed lower/upper guardrails.
pub fn supt_quantile_signed(
    cov: &DMatrix<f64>,
    signs: &[f64],
    level: f64,
    n_sim: usize,
    seed: u64,
) -> Result<SupTQuantile> {
    check_level(level)?;
    if n_sim < 100 {
        return Err(Error::InvalidArgument(format!("n_sim {n_sim} < 100")));
    }
    let m = cov.nrows();
    if m == 0 || cov.ncols() != m || signs.len() != m {
        return Err(Error::InvalidArgument("covariance must be square and nonempty".into()));
    }
    let sd: Vec<f64> = (0..m).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let active: Vec<usize> = (0..m).filter(|&j| sd[j] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::DegenerateCovariance);
    }

    // Factor Sigma = V diag(lambda) V' with negative eigenvalues floored at 0.
    let eig = SymmetricEigen::new(cov.clone());
    let mut factor = eig.eigenvectors.clone();
    for (c, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        factor.column_mut(c).scale_mut(s);
    }
    // Keep only standardized, sign-adjusted rows of active coordinates.
    let rows: Vec<Vec<f64>> = active
        .iter()
        .map(|&j| {
            let scale = signs[j] / sd[j];
            (0..m).map(|c| factor[(j, c)] * scale).collect()
        })
        .collect();

    let shards = n_sim.div_ceil(SHARD);
    let mut stats: Vec<f64> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, shard as u64));
            let count = SHARD.min(n_sim - shard * SHARD);
            let mut z = vec![0.0; m];
            let rows = &rows;
            (0..count).map(move |_| {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                rows.iter()
                    .map(|r| r.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect();

    let k = ((level * n_sim as f64).ceil() as usize).clamp(1, n_sim) - 1;
    let (_, z_star, _) = stats.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    Ok(SupTQuantile {
        z_star: *z_star,
        n_sim,
        seed,
    })
}

/// Sup-t bounds over every column of `table`:
/// `C_j = D_j + z* sqrt(Sigma_jj / n)` (lower sense), mirrored for upper.
pub fn asymptotic_bounds(
    table: &InfluenceTable,
    spec: &SafetySpec,
    level: f64,
    n_sim: usize,
    seed: u64,
) -> Result<LowerBoundTable> {
    let cov = empirical_covariance(table)?;
    let s = spec.len();
    let signs: Vec<f64> = (0..table.num_columns())
        .map(|c| spec.guardrails[c % s].sense.sign())
        .collect();
    let dims = table.num_columns();
    let z_star = if (0..dims).all(|c| cov[(c, c)] <= 0.0) {
        // Every coordinate is known exactly; the band collapses to the estimates.
        check_level(level)?;
        0.0
    } else {
        supt_quantile_signed(&cov, &signs, level, n_sim, seed)?.z_star
    };
    let nf = table.n() as f64;
    let mut entries = Vec::with_capacity(dims);
    for (p, id) in table.policy_ids().iter().enumerate() {
        for (j, g) in spec.guardrails.iter().enumerate() {
            let idx = table.index(p, j);
            let width = -z_star * (cov[(idx, idx)].max(0.0) / nf).sqrt();
            entries.push(BoundEntry::new(p, id, g.outcome, g.sense, table.estimate(idx), width.max(0.0)));
        }
    }
    Ok(LowerBoundTable {
        level,
        method: BoundMethod::Asymptotic,
        correction: Correction::SupT {
            z_star,
            n_sim,
            dims,
            seed,
        },
        num_guardrails: s,
        entries,
    })
}
