//! Stability budget for noisy pruning: the max-information level correction
//! `alpha'(delta)`, its maximizer, the sensitivity floors for the two
//! guarantee modes, the pruned-set size heuristic, and Laplace noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;
use crate::spec::Mode;

const GRID_POINTS: usize = 2000;
const GOLDEN_ITERS: usize = 200;

/// `(alpha - delta) exp(-(n/2) eps^2 - eps sqrt(n log(2/delta) / 2))`.
pub fn alpha_prime(alpha: f64, delta: f64, n: usize, epsilon: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} not in (0,1)")));
    }
    if !(delta > 0.0 && delta < alpha) {
        return Err(Error::InvalidArgument(format!(
            "delta {delta} not in (0, alpha={alpha})"
        )));
    }
    if !(epsilon >= 0.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need epsilon >= 0 and n >= 1, got {epsilon}, {n}"
        )));
    }
    Ok(alpha_prime_unchecked(alpha, delta, n as f64, epsilon))
}

fn alpha_prime_unchecked(alpha: f64, delta: f64, n: f64, eps: f64) -> f64 {
    let exponent = 0.5 * n * eps * eps + eps * (n * (2.0 / delta).ln() / 2.0).sqrt();
    (alpha - delta) * (-exponent).exp()
}

/// Maximizes `alpha'(delta)` over `delta in (0, alpha)`: a 2000-point
/// log-spaced scan, then golden-section search around the best grid point.
/// Returns `(delta*, alpha'(delta*))`.
pub fn delta_star(alpha: f64, n: usize, epsilon: f64) -> Result<(f64, f64)> {
    // validates the arguments once
    alpha_prime(alpha, alpha * 0.5, n, epsilon)?;
    let nf = n as f64;
    let f = |log_d: f64| alpha_prime_unchecked(alpha, log_d.exp(), nf, epsilon);

    let lo = (alpha * 1e-6).ln();
    let hi = (alpha * (1.0 - 1e-6)).ln();
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let (best_i, _) = (0..GRID_POINTS)
        .map(|i| (i, f(lo + step * i as f64)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    let mut a = lo + step * best_i.saturating_sub(1) as f64;
    let mut b = (lo + step * (best_i + 1) as f64).min(hi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..GOLDEN_ITERS {
        if (b - a).abs() < 1e-14 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let candidates = [lo + step * best_i as f64, c, d, 0.5 * (a + b)];
    let best = candidates
        .iter()
        .map(|&x| (x, f(x)))
        .fold((lo, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    Ok((best.0.exp(), best.1))
}

/// The stability parameters for a run at sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityBudget {
    pub alpha: f64,
    pub gamma: f64,
    pub n: usize,
    pub epsilon: f64,
    pub delta_star: f64,
    pub alpha_prime: f64,
}

impl StabilityBudget {
    /// `epsilon = gamma / sqrt(n)` and the maximizing `delta*`.
    pub fn new(alpha: f64, gamma: f64, n: usize) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::InvalidHyperparameter(format!("gamma {gamma} must be > 0")));
        }
        let epsilon = gamma / (n as f64).sqrt();
        let (delta_star, alpha_prime) = delta_star(alpha, n, epsilon)?;
        Ok(Self {
            alpha,
            gamma,
            n,
            epsilon,
            delta_star,
            alpha_prime,
        })
    }
}

/// `f(gamma, alpha) = alpha'(delta*) / alpha`. Independent of `n` once
/// `epsilon = gamma / sqrt(n)`.
pub fn level_ratio(alpha: f64, gamma: f64) -> Result<f64> {
    // n = 1 keeps epsilon = gamma exactly.
    let (_, ap) = delta_star(alpha, 1, gamma)?;
    Ok(ap / alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaGrid {
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// `ratios[a][g]` for `alphas[a]`, `gammas[g]`.
    pub ratios: Vec<Vec<f64>>,
}

pub fn gamma_grid(alphas: &[f64], gammas: &[f64]) -> Result<GammaGrid> {
    let ratios = alphas
        .iter()
        .map(|&a| gammas.iter().map(|&g| level_ratio(a, g)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(GammaGrid {
        alphas: alphas.to_vec(),
        gammas: gammas.to_vec(),
        ratios,
    })
}

/// Inclusive evenly spaced points.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Formats with 6 significant digits, shortest round-trip form.
pub fn sig6(x: f64) -> String {
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded}")
}

impl GammaGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,gamma,ratio\n");
        for (a, row) in self.alphas.iter().zip(&self.ratios) {
            for (g, r) in self.gammas.iter().zip(row) {
                s.push_str(&format!("{},{},{}\n", sig6(*a), sig6(*g), sig6(*r)));
            }
        }
        s
    }
}

/// `t(n, xi) = (4 xi^2 + 2 xi^2 / n + 2 xi^2 (n-1) / n) / (n (n-1))`.
pub fn t_fn(n: usize, xi: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewObservations(n));
    }
    let nf = n as f64;
    let x2 = xi * xi;
    Ok((4.0 * x2 + 2.0 * x2 / nf + 2.0 * x2 * (nf - 1.0) / nf) / (nf * (nf - 1.0)))
}

/// Sensitivity floor for Bernstein bounds:
/// `2 xi / n + sqrt(2 log(3 / alpha') t(n, xi))`.
pub fn b_finite(n: usize, xi: f64, alpha_prime: f64) -> Result<f64> {
    let t = t_fn(n, xi)?;
    Ok(2.0 * xi / n as f64 + (2.0 * (3.0 / alpha_prime).ln() * t).sqrt())
}

/// Sensitivity floor for sup-t bounds:
/// `4 xi / n + Phi^{-1}(1 - alpha' / (eta |S|)) sqrt(t(n, 2 xi))`.
pub fn b_asymp(n: usize, xi: f64, alpha_prime: f64, eta: usize, num_guardrails: usize) -> Result<f64> {
    let t = t_fn(n, 2.0 * xi)?;
    let q = normal::inverse_cdf(1.0 - alpha_prime / (eta as f64 * num_guardrails as f64))?;
    Ok(4.0 * xi / n as f64 + q * t.sqrt())
}

/// `ceil(max(alpha' |Pi|^p / (alpha^p |S|^{1-p}), 1))`.
pub fn eta_heuristic(alpha: f64, alpha_prime: f64, class_size: usize, num_guardrails: usize, p: f64) -> usize {
    let raw = alpha_prime * (class_size as f64).powf(p)
        / (alpha.powf(p) * (num_guardrails as f64).powf(1.0 - p));
    // guard against 9.9999999 style rounding pushing an exact integer up
    let v = raw.max(1.0);
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// `xi = (2 + max_j w_j) / c`.
pub fn xi(max_weight: f64, floor: f64) -> f64 {
    (2.0 + max_weight) / floor
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConstants {
    pub xi: f64,
    pub t_value: f64,
    /// The mode's floor (`B_finite` or `B_asymp`).
    pub floor: f64,
    /// The sensitivity actually used.
    pub b: f64,
    pub mode: Mode,
}

impl SensitivityConstants {
    /// Computes the floor for `mode`; an override below it is rejected.
    pub fn new(
        mode: Mode,
        n: usize,
        xi: f64,
        alpha_prime: f64,
        eta: usize,
        num_guardrails: usize,
        override_b: Option<f64>,
    ) -> Result<Self> {
        let (t_value, floor) = match mode {
            Mode::Finite => (t_fn(n, xi)?, b_finite(n, xi, alpha_prime)?),
            Mode::Asymptotic => (
                t_fn(n, 2.0 * xi)?,
                b_asymp(n, xi, alpha_prime, eta, num_guardrails)?,
            ),
        };
        let b = match override_b {
            Some(b) if b < floor => return Err(Error::SensitivityBelowFloor { given: b, floor }),
            Some(b) => b,
            None => floor,
        };
        Ok(Self {
            xi,
            t_value,
            floor,
            b,
            mode,
        })
    }
}

/// Inverse-CDF Laplace transform of one uniform `u in (0,1)`.
pub fn laplace_from_uniform(u: f64, scale: f64) -> f64 {
    let c = u - 0.5;
    -scale * c.signum() * (1.0 - 2.0 * c.abs()).ln()
}

/// One draw from `Lap(scale)`, density `exp(-|x|/scale) / (2 scale)`.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("Laplace scale {scale} must be > 0")));
    }
    let mut u: f64 = rng.random();
    while u == 0.0 {
        u = rng.random();
    }
    Ok(laplace_from_uniform(u, scale))
}
