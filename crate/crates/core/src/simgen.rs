//! Simulated datasets: equicorrelated Gaussian signal variables, independent
//! Gaussian noise variables, and a binary outcome drawn from a logistic model
//! in the sum of the signals.
//!
//! Normals come from `rand_distr::StandardNormal` (ziggurat) on a ChaCha8
//! stream; correlated signals are `L z` with `L` the Cholesky factor of the
//! equicorrelation matrix. Each row consumes, in order, the signal normals,
//! the noise normals and one uniform for the outcome.
//!
//! Coefficients are calibrated on a large Monte-Carlo sample. For a slope
//! `beta` the intercept is bisected until the mean outcome probability equals
//! the target prevalence; the slope itself is bisected until the expected
//! AUROC of the linear predictor (each row counted as positive with its
//! model probability) matches the target.

use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng::{derive_seed, rng_from_seed};
use crate::tabular::{Column, Dataset};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("correlation {0} does not give a positive-definite matrix")]
    NotPositiveDefinite(f64),
    #[error("target AUROC {0} must lie in (0.5, 1)")]
    BadAuroc(f64),
    #[error("target prevalence {0} must lie in (0, 1)")]
    BadPrevalence(f64),
    #[error("need at least one signal variable and one row")]
    Empty,
    #[error("calibration did not converge within {0} steps")]
    NoConvergence(usize),
}

pub type Result<T> = std::result::Result<T, SimError>;

pub const MAX_STEPS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub n_rows: usize,
    pub n_signal: usize,
    pub rho: f64,
    pub include_noise: bool,
    pub n_noise: usize,
    pub target_auroc: f64,
    pub target_prevalence: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            n_rows: 4000,
            n_signal: 4,
            rho: 0.7,
            include_noise: false,
            n_noise: 12,
            target_auroc: 0.75,
            target_prevalence: 0.20,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_signal == 0 || self.n_rows == 0 {
            return Err(SimError::Empty);
        }
        if !(self.target_auroc > 0.5 && self.target_auroc < 1.0) {
            return Err(SimError::BadAuroc(self.target_auroc));
        }
        if !(self.target_prevalence > 0.0 && self.target_prevalence < 1.0) {
            return Err(SimError::BadPrevalence(self.target_prevalence));
        }
        equicorrelation_cholesky(self.n_signal, self.rho)?;
        Ok(())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.n_signal).map(|i| format!("V{i}")).collect();
        if self.include_noise {
            names.extend((1..=self.n_noise).map(|i| format!("N{i}")));
        }
        names.push("outcome".into());
        names
    }
}

/// Shared signal slope, intercept, and the AUROC / prevalence they achieve
/// on the calibration sample. Noise variables have coefficient 0.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SimCoefficients {
    pub beta: f64,
    pub intercept: f64,
    pub auroc: f64,
    pub prevalence: f64,
}

/// Lower-triangular Cholesky factor, or `None` if `a` is not positive
/// definite.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let v = a[i][i] - s;
                if v.is_nan() || v <= 0.0 {
                    return None;
                }
                l[i][j] = v.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

pub fn equicorrelation_cholesky(p: usize, rho: f64) -> Result<Vec<Vec<f64>>> {
    let a: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| if i == j { 1.0 } else { rho }).collect()).collect();
    if !rho.is_finite() {
        return Err(SimError::NotPositiveDefinite(rho));
    }
    cholesky(&a).ok_or(SimError::NotPositiveDefinite(rho))
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Sums of the signal variables for `n` rows drawn from their own stream.
fn signal_sums(spec: &SimSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    let l = equicorrelation_cholesky(spec.n_signal, spec.rho)?;
    // sum_i (L z)_i = (1' L) z
    let weights: Vec<f64> = (0..spec.n_signal).map(|k| l.iter().map(|row| row[k]).sum()).collect();
    let mut rng = rng_from_seed(seed);
    Ok((0..n)
        .map(|_| weights.iter().map(|w| w * rng.sample::<f64, _>(StandardNormal)).sum())
        .collect())
}

/// Intercept giving mean probability `prevalence` for slope `beta`.
fn intercept_for(sums: &[f64], beta: f64, prevalence: f64) -> f64 {
    let mean_p = |b0: f64| sums.iter().map(|s| logistic(b0 + beta * s)).sum::<f64>() / sums.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < prevalence {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Expected AUROC when row `i` is positive with probability `p[i]`;
/// `order` sorts `scores` ascending. Tied scores count one half.
fn soft_auroc(scores: &[f64], probs: &[f64], order: &[usize]) -> f64 {
    let total_pos: f64 = probs.iter().sum();
    let total_neg = probs.len() as f64 - total_pos;
    let (mut neg_below, mut concordant) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let group = &order[i..=j];
        let pos: f64 = group.iter().map(|&k| probs[k]).sum();
        let neg = group.len() as f64 - pos;
        concordant += pos * (neg_below + 0.5 * neg);
        neg_below += neg;
        i = j + 1;
    }
    concordant / (total_pos * total_neg)
}

/// Calibration with an explicit Monte-Carlo size and stopping tolerance on
/// the AUROC.
pub fn calibrate_with(spec: &SimSpec, n_mc: usize, tolerance: f64) -> Result<SimCoefficients> {
    spec.validate()?;
    let sums = signal_sums(spec, n_mc, derive_seed(spec.seed, &[0xCA11B]))?;
    let mut order: Vec<usize> = (0..sums.len()).collect();
    order.sort_unstable_by(|&a, &b| sums[a].total_cmp(&sums[b]));
    let evaluate = |beta: f64| {
        let b0 = intercept_for(&sums, beta, spec.target_prevalence);
        let probs: Vec<f64> = sums.iter().map(|s| logistic(b0 + beta * s)).collect();
        let prevalence = probs.iter().sum::<f64>() / probs.len() as f64;
        SimCoefficients { beta, intercept: b0, auroc: soft_auroc(&sums, &probs, &order), prevalence }
    };

    let mut lo = 0.0;
    let mut hi = 0.25;
    let mut steps = 0;
    let mut upper = evaluate(hi);
    while upper.auroc < spec.target_auroc {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(SimError::NoConvergence(MAX_STEPS));
        }
        lo = hi;
        hi *= 2.0;
        upper = evaluate(hi);
    }
    for _ in 0..MAX_STEPS {
        let mid = 0.5 * (lo + hi);
        let c = evaluate(mid);
        if (c.auroc - spec.target_auroc).abs() < tolerance {
            return Ok(c);
        }
        if c.auroc < spec.target_auroc {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(SimError::NoConvergence(MAX_STEPS))
}

/// Calibrate on 200 000 Monte-Carlo rows.
pub fn calibrate(spec: &SimSpec) -> Result<SimCoefficients> {
    calibrate_with(spec, 200_000, 0.001)
}

/// Draw `spec.n_rows` rows. Columns are `V1..`, `N1..` (with noise) and a
/// 0/1 `outcome`.
pub fn simulate(spec: &SimSpec, coeffs: &SimCoefficients) -> Result<Dataset> {
    spec.validate()?;
    let l = equicorrelation_cholesky(spec.n_signal, spec.rho)?;
    let n_noise = if spec.include_noise { spec.n_noise } else { 0 };
    let mut rng = rng_from_seed(spec.seed);
    let mut signal = vec![Vec::with_capacity(spec.n_rows); spec.n_signal];
    let mut noise = vec![Vec::with_capacity(spec.n_rows); n_noise];
    let mut outcome = Vec::with_capacity(spec.n_rows);
    let mut z = vec![0.0; spec.n_signal];
    for _ in 0..spec.n_rows {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let mut sum = 0.0;
        for (i, col) in signal.iter_mut().enumerate() {
            let x: f64 = (0..=i).map(|k| l[i][k] * z[k]).sum();
            sum += x;
            col.push(x);
        }
        for col in &mut noise {
            col.push(rng.sample(StandardNormal));
        }
        let p = logistic(coeffs.intercept + coeffs.beta * sum);
        outcome.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
    }
    let names = spec.column_names();
    let columns: Vec<Column> = signal
        .into_iter()
        .chain(noise)
        .chain(std::iter::once(outcome))
        .zip(names)
        .map(|(v, name)| Column::from_values(name, v))
        .collect();
    Ok(Dataset::new(columns).expect("generated columns are consistent"))
}
