//! Finite-width sparse random networks, used as a Monte-Carlo check on the kernel.
//!
//! Layer `l` computes `x^l = relu(W^l x^{l-1} - b^l)` with per-input bias `b^l`
//! chosen so that a fraction `f` of units fire. First-layer weights have
//! variance `sigma^2`, so preactivation variance is `sigma^2 |x|^2` as in the
//! kernel; deeper layers use `sigma^2 / n_{l-1}` so that the kernel is the
//! mean over units `(1/n) sum_i x_i x'_i`.
//!
//! Every unit's weight row comes from its own ChaCha stream keyed by
//! `(seed, layer, unit)`, so results do not depend on thread scheduling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{tau_from_f, KernelConfig};
use crate::linalg::{svd_pinv_solve, PINV_RCOND};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasMode {
    /// Threshold each input's preactivations just below its `floor(f n)` largest.
    Quantile,
    /// `b = sigma_h tau` from the running representation norm.
    Gaussian,
}

#[derive(Debug, Clone)]
pub struct FiniteNetSpec {
    pub widths: Vec<usize>,
    pub f: f64,
    pub sigma: f64,
    pub seed: u64,
    pub bias_mode: BiasMode,
}

impl FiniteNetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!("widths must be non-empty and positive, got {:?}", self.widths)));
        }
        if !(self.f > 0.0 && self.f <= 0.5) {
            return Err(Error::Config(format!("f must lie in (0, 0.5], got {}", self.f)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation across trials over `sqrt(n_trials)`.
    pub stderr: f64,
    pub n_units: usize,
    pub n_trials: usize,
}

impl MCEstimate {
    /// Standard score of `target` under this estimate.
    pub fn z_score(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.stderr == 0.0 {
            return if d == 0.0 { 0.0 } else { d.signum() * f64::INFINITY };
        }
        d / self.stderr
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for trial `trial` derived from a base seed.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial.wrapping_add(0x5EED)))
}

fn unit_rng(seed: u64, layer: usize, unit: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(layer as u64)));
    rng.set_stream(unit as u64);
    rng
}

/// Biases one input's preactivations in place and rectifies them.
fn rectify(pre: &mut [f64], mode: BiasMode, f: f64, tau: f64, sigma_h: f64) {
    let bias = match mode {
        BiasMode::Gaussian => sigma_h * tau,
        BiasMode::Quantile => {
            let k = (f * pre.len() as f64).floor() as usize;
            let mut order: Vec<usize> = (0..pre.len()).collect();
            order.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]).then(a.cmp(&b)));
            let bias = pre[order[k.min(pre.len() - 1)]];
            // zero everything outside the first k in (value, index) order
            for &i in &order[k..] {
                pre[i] = bias;
            }
            bias
        }
    };
    for v in pre.iter_mut() {
        *v = (*v - bias).max(0.0);
    }
}

/// Final-layer activations (`batch x widths.last()`) for the rows of `x`.
pub fn finite_forward(x: &DMatrix<f64>, spec: &FiniteNetSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("inputs must be finite".into()));
    }
    let tau = tau_from_f(spec.f)?;
    let batch = x.nrows();
    let mut act: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    for (layer, &width) in spec.widths.iter().enumerate() {
        let n_prev = act.first().map_or(x.ncols(), |a| a.len());
        let w_scale = if layer == 0 { spec.sigma } else { spec.sigma / (n_prev as f64).sqrt() };
        let columns: Vec<Vec<f64>> = (0..width)
            .into_par_iter()
            .map(|unit| {
                let mut rng = unit_rng(spec.seed, layer, unit);
                let mut acc = vec![0.0; batch];
                for j in 0..n_prev {
                    let w: f64 = rng.sample(StandardNormal);
                    for (a, row) in acc.iter_mut().zip(&act) {
                        *a += w * row[j];
                    }
                }
                acc.iter_mut().for_each(|a| *a *= w_scale);
                acc
            })
            .collect();
        let mut next: Vec<Vec<f64>> = (0..batch).map(|b| columns.iter().map(|c| c[b]).collect()).collect();
        for (row, prev) in next.iter_mut().zip(&act) {
            let norm = prev.iter().map(|v| v * v).sum::<f64>().sqrt();
            rectify(row, spec.bias_mode, spec.f, tau, w_scale * norm);
        }
        act = next;
    }
    let width = *spec.widths.last().unwrap();
    Ok(DMatrix::from_fn(batch, width, |i, j| act[i][j]))
}

/// Empirical kernel `H H^T / n` of activations `H` (`batch x n`).
pub fn activation_gram(h: &DMatrix<f64>) -> DMatrix<f64> {
    h * h.transpose() / h.ncols() as f64
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of the single-layer kernel between `x_p` and `x_q`
/// (Gaussian bias, `config.offset` added to the mean).
pub fn mc_kernel_estimate(
    x_p: &[f64],
    x_q: &[f64],
    config: &KernelConfig,
    n_units: usize,
    n_trials: usize,
    seed: u64,
) -> Result<MCEstimate> {
    if x_p.len() != x_q.len() {
        return Err(Error::Dimension(format!("input lengths differ: {} vs {}", x_p.len(), x_q.len())));
    }
    if n_trials < 2 {
        return Err(Error::Config("need at least two trials for a standard error".into()));
    }
    let mut x = DMatrix::zeros(2, x_p.len());
    x.row_mut(0).copy_from_slice(x_p);
    x.row_mut(1).copy_from_slice(x_q);
    let samples: Result<Vec<f64>> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let spec = FiniteNetSpec {
                widths: vec![n_units],
                f: config.f,
                sigma: config.sigma,
                seed: trial_seed(seed, t as u64),
                bias_mode: BiasMode::Gaussian,
            };
            let h = finite_forward(&x, &spec)?;
            Ok(h.row(0).dot(&h.row(1)) / n_units as f64)
        })
        .collect();
    let (mean, stderr) = mean_and_stderr(&samples?);
    Ok(MCEstimate { mean: mean + config.offset, stderr, n_units, n_trials })
}

/// Entrywise mean and standard error of the final-layer empirical Gram over
/// `n_trials` networks seeded from `spec.seed`.
pub fn mc_gram_estimate(
    x: &DMatrix<f64>,
    spec: &FiniteNetSpec,
    n_trials: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n_trials < 2 {
        return Err(Error::Config("need at least two trials for a standard error".into()));
    }
    let grams: Result<Vec<DMatrix<f64>>> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let s = FiniteNetSpec { seed: trial_seed(spec.seed, t as u64), ..spec.clone() };
            Ok(activation_gram(&finite_forward(x, &s)?))
        })
        .collect();
    let grams = grams?;
    let b = x.nrows();
    let mut mean = DMatrix::zeros(b, b);
    let mut err = DMatrix::zeros(b, b);
    for i in 0..b {
        for j in 0..b {
            let vals: Vec<f64> = grams.iter().map(|g| g[(i, j)]).collect();
            let (m, s) = mean_and_stderr(&vals);
            mean[(i, j)] = m;
            err[(i, j)] = s;
        }
    }
    Ok((mean, err))
}

/// Least-squares readout `W = pinv(H_train) Y` applied to `h_test`.
pub fn pseudo_inverse_readout(
    h_train: &DMatrix<f64>,
    y_train: &DMatrix<f64>,
    h_test: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if h_test.ncols() != h_train.ncols() {
        return Err(Error::Dimension(format!(
            "train activations have {} units, test {}",
            h_train.ncols(),
            h_test.ncols()
        )));
    }
    let w = svd_pinv_solve(h_train, y_train, PINV_RCOND)?;
    Ok(h_test * w)
}
