//! Observations, the known logging propensities, and dataset validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOL: f64 = 1e-9;

/// One logged record `(x, a, y)`. Actions are 1-indexed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub covariates: Vec<f64>,
    pub action: usize,
    pub outcomes: Vec<f64>,
}

impl Observation {
    pub fn new(covariates: Vec<f64>, action: usize, outcomes: Vec<f64>) -> Self {
        Self {
            covariates,
            action,
            outcomes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PropensitySource {
    /// `e(k, x)` does not depend on `x`.
    Constant(Vec<f64>),
    /// `e(k, x_i)` recorded per row, as supplied by an experiment log.
    PerRow(Vec<Vec<f64>>),
}

/// Known assignment probabilities `e(k, x)` together with the positivity
/// floor `c` they must respect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    source: PropensitySource,
    floor: f64,
}

impl PropensityModel {
    pub fn constant(probs: Vec<f64>, floor: f64) -> Result<Self> {
        check_floor(floor)?;
        check_distribution(&probs).map_err(Error::InvalidPropensity)?;
        Ok(Self {
            source: PropensitySource::Constant(probs),
            floor,
        })
    }

    /// Uniform randomization over `k` arms with floor `1/k`.
    pub fn uniform(k: usize) -> Self {
        let p = 1.0 / k as f64;
        Self {
            source: PropensitySource::Constant(vec![p; k]),
            floor: p,
        }
    }

    pub fn per_row(rows: Vec<Vec<f64>>, floor: f64) -> Result<Self> {
        check_floor(floor)?;
        for (i, row) in rows.iter().enumerate() {
            check_distribution(row)
                .map_err(|m| Error::InvalidPropensity(format!("row {i}: {m}")))?;
        }
        Ok(Self {
            source: PropensitySource::PerRow(rows),
            floor,
        })
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn num_actions(&self) -> Option<usize> {
        match &self.source {
            PropensitySource::Constant(p) => Some(p.len()),
            PropensitySource::PerRow(rows) => rows.first().map(Vec::len),
        }
    }

    /// `e(action, x_row)`, with `action` 1-indexed.
    #[inline]
    pub fn prob(&self, row: usize, action: usize) -> f64 {
        match &self.source {
            PropensitySource::Constant(p) => p[action - 1],
            PropensitySource::PerRow(rows) => rows[row][action - 1],
        }
    }

    fn rows(&self) -> Option<usize> {
        match &self.source {
            PropensitySource::Constant(_) => None,
            PropensitySource::PerRow(rows) => Some(rows.len()),
        }
    }

    fn subset(&self, indices: &[usize]) -> Self {
        let source = match &self.source {
            PropensitySource::Constant(p) => PropensitySource::Constant(p.clone()),
            PropensitySource::PerRow(rows) => {
                PropensitySource::PerRow(indices.iter().map(|&i| rows[i].clone()).collect())
            }
        };
        Self {
            source,
            floor: self.floor,
        }
    }
}

fn check_floor(floor: f64) -> Result<()> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::InvalidPropensity(format!(
            "positivity floor {floor} not in (0,1)"
        )));
    }
    Ok(())
}

fn check_distribution(p: &[f64]) -> std::result::Result<(), String> {
    if p.is_empty() {
        return Err("no actions".into());
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(format!("negative or non-finite probability in {p:?}"));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(format!("probabilities sum to {s}, not 1"));
    }
    Ok(())
}

/// A validated set of i.i.d. observations with known propensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    observations: Vec<Observation>,
    num_actions: usize,
    propensity: PropensityModel,
}

impl Dataset {
    /// Builds and validates a dataset; see [`validate_dataset`].
    pub fn new(
        observations: Vec<Observation>,
        num_actions: usize,
        propensity: PropensityModel,
    ) -> Result<Self> {
        let ds = Self {
            observations,
            num_actions,
            propensity,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_outcomes(&self) -> usize {
        self.observations.first().map_or(0, |o| o.outcomes.len())
    }

    pub fn covariate_dim(&self) -> usize {
        self.observations.first().map_or(0, |o| o.covariates.len())
    }

    pub fn propensity(&self) -> &PropensityModel {
        &self.propensity
    }

    /// Row subset in the given order. Indices must be in range.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            observations: indices
                .iter()
                .map(|&i| self.observations[i].clone())
                .collect(),
            num_actions: self.num_actions,
            propensity: self.propensity.subset(indices),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_dataset(self)
    }
}

/// Checks every structural assumption the estimators rely on: consistent
/// dimensions, actions in `1..=K`, outcomes in `[0,1]`, and propensities at
/// or above the positivity floor on every observed row.
pub fn validate_dataset(ds: &Dataset) -> Result<()> {
    let first = ds.observations.first().ok_or(Error::EmptyDataset)?;
    let d_x = first.covariates.len();
    let d_y = first.outcomes.len();
    let k = ds.num_actions;
    if k == 0 {
        return Err(Error::InvalidArgument("num_actions must be >= 1".into()));
    }
    if d_y == 0 {
        return Err(Error::DimensionMismatch {
            row: 0,
            detail: "no outcomes".into(),
        });
    }
    if let Some(pk) = ds.propensity.num_actions() {
        if pk != k {
            return Err(Error::InvalidPropensity(format!(
                "propensity model covers {pk} actions, dataset declares {k}"
            )));
        }
    }
    if let Some(rows) = ds.propensity.rows() {
        if rows != ds.len() {
            return Err(Error::InvalidPropensity(format!(
                "{rows} propensity rows for {} observations",
                ds.len()
            )));
        }
    }
    let floor = ds.propensity.floor();
    for (row, o) in ds.observations.iter().enumerate() {
        if o.covariates.len() != d_x {
            return Err(Error::DimensionMismatch {
                row,
                detail: format!("{} covariates, expected {d_x}", o.covariates.len()),
            });
        }
        if o.outcomes.len() != d_y {
            return Err(Error::DimensionMismatch {
                row,
                detail: format!("{} outcomes, expected {d_y}", o.outcomes.len()),
            });
        }
        if o.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch {
                row,
                detail: "non-finite covariate".into(),
            });
        }
        if o.action == 0 || o.action > k {
            return Err(Error::ActionOutOfRange {
                row,
                action: o.action,
                num_actions: k,
            });
        }
        for (j, &y) in o.outcomes.iter().enumerate() {
            if !(0.0..=1.0).contains(&y) {
                return Err(Error::OutcomeOutOfRange {
                    row,
                    outcome: j + 1,
                    value: y,
                });
            }
        }
        for action in 1..=k {
            let e = ds.propensity.prob(row, action);
            if e < floor {
                return Err(Error::PositivityViolated {
                    row,
                    action,
                    value: e,
                    floor,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(y: f64) -> Observation {
        Observation::new(vec![0.1, 0.2], 1, vec![y])
    }

    #[test]
    fn single_row_passes() {
        let ds = Dataset::new(vec![row(0.3)], 2, PropensityModel::uniform(2)).unwrap();
        assert_eq!(ds.len(), 1);
        assert!(ds.validate().is_ok());
        // idempotent
        assert!(ds.validate().is_ok());
    }

    #[test]
    fn outcome_out_of_range_reports_row() {
        let err = Dataset::new(
            vec![row(0.3), row(1.2)],
            2,
            PropensityModel::uniform(2),
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::OutcomeOutOfRange {
                row: 1,
                outcome: 1,
                value: 1.2
            }
        );
        assert!(err.to_string().contains("outcome out of range at row 1"));
    }

    #[test]
    fn positivity_violation() {
        let e = PropensityModel::per_row(vec![vec![0.5, 0.5], vec![1.0, 0.0]], 0.1).unwrap();
        let err = Dataset::new(vec![row(0.3), row(0.4)], 2, e).unwrap_err();
        assert!(matches!(err, Error::PositivityViolated { row: 1, action: 2, .. }));
        assert!(err.to_string().contains("positivity violated"));
    }

    #[test]
    fn dimension_mismatch() {
        let bad = Observation::new(vec![0.1], 1, vec![0.2]);
        let err = Dataset::new(vec![row(0.3), bad], 2, PropensityModel::uniform(2)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { row: 1, .. }));
    }

    #[test]
    fn action_out_of_range() {
        let bad = Observation::new(vec![0.1, 0.2], 3, vec![0.2]);
        let err = Dataset::new(vec![bad], 2, PropensityModel::uniform(2)).unwrap_err();
        assert!(matches!(err, Error::ActionOutOfRange { row: 0, action: 3, .. }));
    }

    #[test]
    fn empty_dataset() {
        assert_eq!(
            Dataset::new(vec![], 2, PropensityModel::uniform(2)).unwrap_err(),
            Error::EmptyDataset
        );
    }

    #[test]
    fn propensity_must_sum_to_one() {
        assert!(PropensityModel::constant(vec![0.5, 0.4], 0.1).is_err());
        assert!(PropensityModel::constant(vec![0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn subset_keeps_per_row_propensities() {
        let e = PropensityModel::per_row(vec![vec![0.5, 0.5], vec![0.3, 0.7]], 0.2).unwrap();
        let ds = Dataset::new(vec![row(0.3), row(0.4)], 2, e).unwrap();
        let sub = ds.subset(&[1]);
        assert_eq!(sub.len(), 1);
        assert_eq!(sub.propensity().prob(0, 2), 0.7);
        assert!(sub.validate().is_ok());
    }
}
