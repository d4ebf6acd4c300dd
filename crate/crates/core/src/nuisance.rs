//! Cross-fitted outcome regressions `mu_j(k, x)` for the doubly-robust
//! estimator: ordinary least squares with intercept per (fold, arm, outcome).

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct NuisanceModel {
    folds: usize,
    fold_of: Vec<usize>,
    num_actions: usize,
    num_outcomes: usize,
    /// `[fold][action-1]` -> `(d_X + 1) x d_Y` coefficients, intercept first.
    coefficients: Vec<Vec<DMatrix<f64>>>,
    /// Clipped cross-fit predictions, indexed `(row * K + action-1) * d_Y + outcome-1`.
    predictions: Vec<f64>,
    training_rows: Vec<usize>,
    ridge_fallbacks: usize,
}

impl NuisanceModel {
    /// The degenerate model `mu == 0`; DR then coincides with IPW.
    pub fn zero(ds: &Dataset) -> Self {
        let (n, k, dy) = (ds.len(), ds.num_actions(), ds.num_outcomes());
        Self {
            folds: 1,
            fold_of: vec![0; n],
            num_actions: k,
            num_outcomes: dy,
            coefficients: vec![vec![DMatrix::zeros(ds.covariate_dim() + 1, dy); k]],
            predictions: vec![0.0; n * k * dy],
            training_rows: vec![n],
            ridge_fallbacks: 0,
        }
    }

    /// Clipped prediction for `row` from the model that did not see its fold.
    #[inline]
    pub fn prediction(&self, row: usize, action: usize, outcome: usize) -> f64 {
        self.predictions[(row * self.num_actions + action - 1) * self.num_outcomes + outcome - 1]
    }

    /// Clipped prediction of fold model `fold` at arbitrary covariates.
    pub fn predict(&self, fold: usize, action: usize, outcome: usize, x: &[f64]) -> f64 {
        let beta = &self.coefficients[fold][action - 1];
        let mut v = beta[(0, outcome - 1)];
        for (c, xv) in x.iter().enumerate() {
            v += beta[(c + 1, outcome - 1)] * xv;
        }
        v.clamp(0.0, 1.0)
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.fold_of[row]
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    /// Rows used to train the model applied to fold `fold`.
    pub fn training_rows(&self, fold: usize) -> usize {
        self.training_rows[fold]
    }

    pub fn ridge_fallbacks(&self) -> usize {
        self.ridge_fallbacks
    }
}

/// Splits rows into `folds` near-equal blocks of a random permutation and fits
/// one OLS model per (fold complement, arm), each covering every outcome.
pub fn fit_nuisance<R: Rng + ?Sized>(ds: &Dataset, folds: usize, rng: &mut R) -> Result<NuisanceModel> {
    if folds < 2 {
        return Err(Error::InvalidHyperparameter("folds must be >= 2".into()));
    }
    let n = ds.len();
    if n < folds {
        return Err(Error::InvalidArgument(format!(
            "{n} observations cannot fill {folds} folds"
        )));
    }
    let (k, dy, dx) = (ds.num_actions(), ds.num_outcomes(), ds.covariate_dim());
    let p = dx + 1;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut fold_of = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold_of[row] = pos * folds / n;
    }

    let obs = ds.observations();
    let mut coefficients = Vec::with_capacity(folds);
    let mut training_rows = Vec::with_capacity(folds);
    let mut ridge_fallbacks = 0;
    for f in 0..folds {
        let mut per_arm = Vec::with_capacity(k);
        training_rows.push(fold_of.iter().filter(|&&g| g != f).count());
        for a in 1..=k {
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DMatrix::<f64>::zeros(p, dy);
            let mut count = 0usize;
            let mut row = DVector::<f64>::zeros(p);
            for (i, o) in obs.iter().enumerate() {
                if fold_of[i] == f || o.action != a {
                    continue;
                }
                count += 1;
                row[0] = 1.0;
                row.rows_mut(1, dx).copy_from_slice(&o.covariates);
                xtx.syger(1.0, &row, &row, 1.0);
                for j in 0..dy {
                    let y = o.outcomes[j];
                    for c in 0..p {
                        xty[(c, j)] += row[c] * y;
                    }
                }
            }
            if count == 0 {
                return Err(Error::EmptyCell { fold: f, action: a });
            }
            // syger only fills the lower triangle.
            xtx.fill_upper_triangle_with_lower_triangle();
            let beta = match solve_normal(&xtx, &xty, 0.0) {
                Some(b) => b,
                None => {
                    ridge_fallbacks += 1;
                    warn!("singular design for fold {f}, action {a}; using ridge {RIDGE:e}");
                    solve_normal(&xtx, &xty, RIDGE)
                        .unwrap_or_else(|| pseudo_inverse_solve(&xtx, &xty))
                }
            };
            per_arm.push(beta);
        }
        coefficients.push(per_arm);
    }

    let mut model = NuisanceModel {
        folds,
        fold_of,
        num_actions: k,
        num_outcomes: dy,
        coefficients,
        predictions: vec![0.0; n * k * dy],
        training_rows,
        ridge_fallbacks,
    };
    for (i, o) in obs.iter().enumerate() {
        let f = model.fold_of[i];
        for a in 1..=k {
            for j in 1..=dy {
                let v = model.predict(f, a, j, &o.covariates);
                model.predictions[(i * k + a - 1) * dy + j - 1] = v;
            }
        }
    }
    Ok(model)
}

fn solve_normal(xtx: &DMatrix<f64>, xty: &DMatrix<f64>, ridge: f64) -> Option<DMatrix<f64>> {
    let mut a = xtx.clone();
    if ridge > 0.0 {
        for d in 0..a.nrows() {
            a[(d, d)] += ridge;
        }
    }
    let chol = a.cholesky()?;
    // Reject numerically singular systems that Cholesky still factors.
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|d| l[(d, d)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if ridge == 0.0 && (max == 0.0 || min / max < 1e-7) {
        return None;
    }
    Some(chol.solve(xty))
}

fn pseudo_inverse_solve(xtx: &DMatrix<f64>, xty: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = xtx.clone().svd(true, true);
    svd.solve(xty, 1e-12)
        .unwrap_or_else(|_| DMatrix::zeros(xtx.ncols(), xty.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Observation, PropensityModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset<F: Fn(&[f64], usize) -> f64>(n: usize, seed: u64, f: F) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
                let a = if rng.random::<bool>() { 1 } else { 2 };
                let y = f(&x, a);
                Observation::new(x, a, vec![y])
            })
            .collect();
        Dataset::new(obs, 2, PropensityModel::uniform(2)).unwrap()
    }

    #[test]
    fn constant_outcome_predicted_exactly() {
        let ds = dataset(200, 1, |_, _| 0.7);
        let m = fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for i in 0..ds.len() {
            for a in 1..=2 {
                assert!((m.prediction(i, a, 1) - 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn recovers_noise_free_linear_model() {
        let truth = |x: &[f64], a: usize| {
            if a == 1 {
                0.2 + 0.3 * x[0] + 0.1 * x[1] + 0.25 * x[2]
            } else {
                0.6 - 0.4 * x[1]
            }
        };
        let ds = dataset(5000, 3, truth);
        let m = fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let mut max_err: f64 = 0.0;
        for (i, o) in ds.observations().iter().enumerate() {
            for a in 1..=2 {
                max_err = max_err.max((m.prediction(i, a, 1) - truth(&o.covariates, a)).abs());
            }
        }
        assert!(max_err < 1e-6, "max error {max_err}");
    }

    #[test]
    fn fold_arithmetic() {
        let ds = dataset(10, 5, |x, _| x[0]);
        let m = fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(6));
        // Ten rows with random arms can leave a fold complement without one
        // arm; search for a seed where every cell is populated.
        let m = match m {
            Ok(m) => m,
            Err(_) => (0..100)
                .find_map(|s| fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(s)).ok())
                .unwrap(),
        };
        for f in 0..5 {
            assert_eq!(m.training_rows(f), 8);
            assert_eq!((0..10).filter(|&i| m.fold_of(i) == f).count(), 2);
        }
    }

    #[test]
    fn predictions_clipped_and_deterministic() {
        let ds = dataset(300, 7, |x, a| if a == 1 { x[0] } else { 1.0 - x[0] });
        let m1 = fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let m2 = fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(m1.predictions, m2.predictions);
        assert!(m1.predictions.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn empty_cell_is_an_error() {
        // every row takes arm 1
        let obs = (0..20)
            .map(|i| Observation::new(vec![i as f64 / 20.0], 1, vec![0.5]))
            .collect();
        let ds = Dataset::new(obs, 2, PropensityModel::uniform(2)).unwrap();
        let e = fit_nuisance(&ds, 5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(e, Error::EmptyCell { action: 2, .. }));
    }

    #[test]
    fn singular_design_falls_back_to_ridge() {
        // duplicated covariate column makes X'X singular
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let obs = (0..100)
            .map(|i| {
                let v: f64 = rng.random();
                Observation::new(vec![v, v], 1 + i % 2, vec![0.5 * v])
            })
            .collect();
        let ds = Dataset::new(obs, 2, PropensityModel::uniform(2)).unwrap();
        let m = fit_nuisance(&ds, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(m.ridge_fallbacks() > 0);
        for (i, o) in ds.observations().iter().enumerate() {
            assert!((m.prediction(i, 1, 1) - 0.5 * o.covariates[0]).abs() < 1e-4);
        }
    }
}
