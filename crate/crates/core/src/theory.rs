//! Learning curves of kernel ridge regression from the kernel spectrum.
//!
//! Given eigenvalues `eta`, `P` training samples and ridge `lambda`, the
//! self-consistent scalar `kappa` solves
//!
//! ```text
//! kappa = lambda + sum_rho kappa eta_rho / (kappa + P eta_rho)
//! ```
//!
//! and with `gamma = sum_rho P eta_rho^2 / (kappa + P eta_rho)^2` the modal errors are
//! `E_rho = kappa^2 / ((1 - gamma) (kappa + P eta_rho)^2)`. The generalization error is
//! `E_g = sum_rho v_rho^2 E_rho` for target powers `v_rho^2`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::roots::brent;

/// Relative tolerance on `ln kappa` in the root search.
const KAPPA_LOG_TOL: f64 = 1e-15;
const KAPPA_MAX_ITER: usize = 200;

#[derive(Debug, Clone)]
pub struct TheoryResult {
    pub kappa: f64,
    pub gamma: f64,
    pub e_rho: Vec<f64>,
    /// `NaN` until target powers are supplied.
    pub e_g: f64,
    pub p_train: usize,
    pub ridge: f64,
}

fn check_inputs(eta: &[f64], p_train: usize, ridge: f64) -> Result<()> {
    if eta.is_empty() {
        return Err(Error::Theory("empty spectrum".into()));
    }
    if let Some(v) = eta.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Theory(format!("eigenvalues must be finite and >= 0, found {v}")));
    }
    if eta.iter().all(|&v| v == 0.0) {
        return Err(Error::Theory("spectrum is identically zero".into()));
    }
    if p_train == 0 {
        return Err(Error::Theory("need at least one training sample".into()));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Theory(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    Ok(())
}

/// `sum eta / (kappa + P eta)`.
fn h(eta: &[f64], p: f64, kappa: f64) -> f64 {
    eta.iter().map(|&e| e / (kappa + p * e)).sum()
}

/// Solves the self-consistent equation for `kappa`.
///
/// Returns 0 when `ridge = 0` and `P` is at least the number of non-zero eigenvalues.
pub fn solve_kappa(eta: &[f64], p_train: usize, ridge: f64) -> Result<f64> {
    check_inputs(eta, p_train, ridge)?;
    let p = p_train as f64;
    let n_nonzero = eta.iter().filter(|&&e| e > 0.0).count();
    let total: f64 = eta.iter().sum();
    // R(kappa) = 1 - h(kappa) - ridge / kappa is strictly increasing; search in ln kappa.
    let (lo, hi) = if ridge > 0.0 {
        (ridge, ridge + total)
    } else {
        if p_train >= n_nonzero {
            return Ok(0.0);
        }
        let smallest = eta.iter().copied().filter(|&e| e > 0.0).fold(f64::INFINITY, f64::min);
        (0.5 * smallest, total)
    };
    let residual = |u: f64| {
        let k = u.exp();
        1.0 - h(eta, p, k) - ridge / k
    };
    let root = brent(residual, lo.ln(), hi.ln(), KAPPA_LOG_TOL, KAPPA_MAX_ITER)?;
    let mut kappa = root.x.exp();
    // Newton polish on R in kappa itself; R' = sum eta / (kappa + P eta)^2 + ridge / kappa^2.
    for _ in 0..3 {
        let r = 1.0 - h(eta, p, kappa) - ridge / kappa;
        let dr: f64 = eta.iter().map(|&e| e / (kappa + p * e).powi(2)).sum::<f64>() + ridge / (kappa * kappa);
        let next = kappa - r / dr;
        if !(next > 0.0) || next == kappa {
            break;
        }
        let r_next = 1.0 - h(eta, p, next) - ridge / next;
        if r_next.abs() >= r.abs() {
            break;
        }
        kappa = next;
    }
    let check = (kappa - ridge - kappa * h(eta, p, kappa)).abs();
    if check > 1e-10 * kappa {
        return Err(Error::Numerical(format!(
            "kappa = {kappa:e} leaves residual {check:e} after {} iterations",
            root.iterations
        )));
    }
    Ok(kappa)
}

/// `kappa`, `gamma` and the modal errors, with `e_g` left as `NaN`.
pub fn modal_errors(eta: &[f64], p_train: usize, ridge: f64) -> Result<TheoryResult> {
    let kappa = solve_kappa(eta, p_train, ridge)?;
    let p = p_train as f64;
    if kappa == 0.0 {
        // Every non-zero mode is interpolated exactly; null modes are never learned.
        let n_nonzero = eta.iter().filter(|&&e| e > 0.0).count();
        return Ok(TheoryResult {
            kappa,
            gamma: n_nonzero as f64 / p,
            e_rho: eta.iter().map(|&e| if e > 0.0 { 0.0 } else { 1.0 }).collect(),
            e_g: f64::NAN,
            p_train,
            ridge,
        });
    }
    let gamma: f64 = eta.iter().map(|&e| p * e * e / (kappa + p * e).powi(2)).sum();
    if gamma >= 1.0 {
        return Err(Error::Theory(format!("gamma = {gamma} is not below 1")));
    }
    let e_rho = eta.iter().map(|&e| kappa * kappa / ((1.0 - gamma) * (kappa + p * e).powi(2))).collect();
    Ok(TheoryResult { kappa, gamma, e_rho, e_g: f64::NAN, p_train, ridge })
}

/// `sum v_rho^2 E_rho`.
pub fn generalization_error(tr: &TheoryResult, v_bar_sq: &[f64]) -> Result<f64> {
    if v_bar_sq.len() != tr.e_rho.len() {
        return Err(Error::Dimension(format!("{} target powers for {} modes", v_bar_sq.len(), tr.e_rho.len())));
    }
    Ok(tr.e_rho.iter().zip(v_bar_sq).map(|(e, v)| e * v).sum())
}

/// Full theory at one spectrum: modal errors plus `e_g`.
pub fn predict(eta: &[f64], v_bar_sq: &[f64], p_train: usize, ridge: f64) -> Result<TheoryResult> {
    let mut tr = modal_errors(eta, p_train, ridge)?;
    tr.e_g = generalization_error(&tr, v_bar_sq)?;
    Ok(tr)
}

/// Analytic gradient of `E_g` with respect to each eigenvalue.
///
/// Uses `d kappa / d eta_i = u_i^2 / (1 - gamma)` with `u_i = kappa / (kappa + P eta_i)`, so
///
/// ```text
/// dE_g/deta_i = 2P (eta_i kappa E_g - v_i^2 kappa^2) / ((1 - gamma) (kappa + P eta_i)^3)
///             + 2P (b - c E_g kappa^2)        / ((1 - gamma)^2 (kappa + P eta_i)^2)
/// b = kappa^3 sum v^2 eta / (kappa + P eta)^3,   c = sum eta^2 / (kappa + P eta)^3
/// ```
pub fn grad_eg(eta: &[f64], v_bar_sq: &[f64], p_train: usize, ridge: f64) -> Result<Vec<f64>> {
    let tr = predict(eta, v_bar_sq, p_train, ridge)?;
    if tr.kappa == 0.0 {
        return Ok(vec![0.0; eta.len()]);
    }
    let (k, g, eg) = (tr.kappa, tr.gamma, tr.e_g);
    let p = p_train as f64;
    let b = k.powi(3) * eta.iter().zip(v_bar_sq).map(|(&e, &v)| v * e / (k + p * e).powi(3)).sum::<f64>();
    let c: f64 = eta.iter().map(|&e| e * e / (k + p * e).powi(3)).sum();
    let shared = 2.0 * p * (b - c * eg * k * k) / (1.0 - g).powi(2);
    Ok(eta
        .iter()
        .zip(v_bar_sq)
        .map(|(&e, &v)| {
            let d = k + p * e;
            2.0 * p * (e * k * eg - v * k * k) / ((1.0 - g) * d.powi(3)) + shared / (d * d)
        })
        .collect())
}

/// First-order change of the modal errors when a flat spectrum `eta_flat` moves by `d_eta`
/// at load `alpha = P / N`.
pub fn perturb_modal(d_eta: &[f64], alpha: f64, eta_flat: f64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(eta_flat > 0.0 && eta_flat.is_finite()) {
        return Err(Error::Domain(format!("flat eigenvalue must be positive, got {eta_flat}")));
    }
    if d_eta.is_empty() || d_eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("perturbation must be non-empty and finite".into()));
    }
    if d_eta.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Domain("perturbation must be sorted non-increasing".into()));
    }
    let mean = d_eta.iter().sum::<f64>() / d_eta.len() as f64;
    let scale = -2.0 * (1.0 - alpha) * alpha / eta_flat;
    Ok(d_eta.iter().map(|d| scale * (d - mean)).collect())
}

/// `E_g` with the constant eigenfunction's mode `(eta0, v0_sq)` held apart from the rest
/// and optional label noise of variance `noise_var`.
pub fn eg_with_uniform_mode(
    eta: &[f64],
    eta0: f64,
    v_bar_sq: &[f64],
    v0_sq: f64,
    p_train: usize,
    ridge: f64,
    noise_var: f64,
) -> Result<f64> {
    if v_bar_sq.len() != eta.len() {
        return Err(Error::Dimension(format!("{} target powers for {} modes", v_bar_sq.len(), eta.len())));
    }
    if !(eta0 >= 0.0 && v0_sq >= 0.0 && noise_var >= 0.0) {
        return Err(Error::Theory("eta0, v0_sq and noise_var must be >= 0".into()));
    }
    let tr = modal_errors(eta, p_train, ridge)?;
    let (k, g) = (tr.kappa, tr.gamma);
    if k == 0.0 {
        return Ok(0.0);
    }
    let p = p_train as f64;
    let body: f64 =
        eta.iter().zip(v_bar_sq).map(|(&e, &v)| (k * k * v + p * noise_var * e * e) / (k + p * e).powi(2)).sum();
    let uniform = if v0_sq == 0.0 { 0.0 } else { (1.0 + g) / (1.0 - g) * k * k * v0_sq / (k + 2.0 * p * eta0).powi(2) };
    Ok(body / (1.0 - g) + uniform)
}

/// Writes `rho,eta,v_bar_sq,e_rho` rows followed by `kappa`, `gamma` and `e_g` lines.
pub fn write_report(path: impl AsRef<Path>, eta: &[f64], v_bar_sq: &[f64], tr: &TheoryResult) -> Result<()> {
    let path = path.as_ref();
    if eta.len() != tr.e_rho.len() || v_bar_sq.len() != eta.len() {
        return Err(Error::Dimension("report columns have different lengths".into()));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "rho,eta,v_bar_sq,e_rho").map_err(io)?;
    for rho in 0..eta.len() {
        writeln!(w, "{rho},{:.16e},{:.16e},{:.16e}", eta[rho], v_bar_sq[rho], tr.e_rho[rho]).map_err(io)?;
    }
    writeln!(w, "kappa,{:.16e}", tr.kappa).map_err(io)?;
    writeln!(w, "gamma,{:.16e}", tr.gamma).map_err(io)?;
    writeln!(w, "e_g,{:.16e}", tr.e_g).map_err(io)?;
    w.flush().map_err(io)
}
