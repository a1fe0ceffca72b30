//! The single-layer sparse NNGP kernel and its normalized cosine map.
//!
//! A ReLU layer whose bias keeps a fixed fraction `f` of units active has the
//! threshold `tau = sqrt(2) * erfinv(1 - 2f)` in units of the preactivation
//! standard deviation. The kernel between two inputs at angle `theta` is
//!
//! ```text
//! K = sigma^2 / (2 pi) * |x_p| |x_q| * (2 I(theta | tau) - tau sqrt(2 pi) (1 + cos theta))
//! ```
//!
//! where `I` is a one-dimensional integral over `[0, (pi - theta) / 2]`.
//!
//! The bracket `2 I - tau sqrt(2 pi)(1 + cos theta)` is a difference of two
//! large terms when `theta -> pi` and `tau > 0`. The part of `I` proportional
//! to `erf` integrates in closed form against the subtracted term, so we
//! evaluate the reduced integral
//!
//! ```text
//! J(theta | tau) = I(theta | tau) - tau sqrt(pi / 2) (1 + cos theta)
//! ```
//!
//! whose integrand carries `erfc` instead of `erf` and stays accurate in the tail.
//! The bracket is then simply `2 J`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::special::{erfc, erfc_inv};

/// Below this threshold `tau` is treated as exactly zero and the closed form is used.
pub const TAU_ZERO: f64 = 1e-14;

/// Absolute accuracy target of the adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-13;

/// Cosines up to this far outside `[-1, 1]` are clamped; larger deviations are errors.
pub const COSINE_CLAMP: f64 = 1e-12;

const SQRT_PI_2: f64 = 1.253_314_137_315_500_3; // sqrt(pi / 2)

/// Parameters of a sparse NNGP kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Fraction of active units per layer, in `(0, 0.5]`.
    pub f: f64,
    /// Threshold in preactivation standard deviations; derived from `f`.
    pub tau: f64,
    /// Weight standard-deviation scale.
    pub sigma: f64,
    /// Number of hidden layers.
    pub depth: usize,
    /// Ridge parameter of the regression.
    pub ridge: f64,
    /// Constant added to every kernel entry after the last layer.
    pub offset: f64,
}

impl KernelConfig {
    /// A single-layer config at sparsity `f` using the norm-preserving scale `sigma*`.
    pub fn new(f: f64) -> Result<Self> {
        let tau = tau_from_f(f)?;
        let sigma = sigma_star(tau)?;
        Ok(Self { f, tau, sigma, depth: 1, ridge: 0.0, offset: 0.0 })
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        self.sigma = sigma;
        Ok(self)
    }

    pub fn with_depth(mut self, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        self.depth = depth;
        Ok(self)
    }

    pub fn with_ridge(mut self, ridge: f64) -> Result<Self> {
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be non-negative, got {ridge}")));
        }
        self.ridge = ridge;
        Ok(self)
    }

    pub fn with_offset(mut self, offset: f64) -> Result<Self> {
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(Error::Config(format!("offset must be non-negative, got {offset}")));
        }
        self.offset = offset;
        Ok(self)
    }
}

/// Threshold `tau` such that a standard normal exceeds it with probability `f`.
pub fn tau_from_f(f: f64) -> Result<f64> {
    if !(f > 0.0 && f <= 0.5) {
        return Err(Error::Domain(format!("active fraction must lie in (0, 0.5], got {f}")));
    }
    if f == 0.5 {
        return Ok(0.0);
    }
    // P(Z > tau) = erfc(tau / sqrt 2) / 2 = f
    Ok(SQRT_2 * erfc_inv(2.0 * f))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("angle must lie in [0, pi], got {theta}")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("threshold must be finite and >= 0, got {tau}")));
    }
    Ok(())
}

/// Integrand of the reduced integral `J` at angle `phi`.
#[inline]
fn reduced_integrand(phi: f64, theta: f64, tau: f64) -> f64 {
    let s = phi.sin();
    if s <= 0.0 {
        return 0.0;
    }
    let st = (phi + theta).sin();
    let x = tau / (SQRT_2 * s);
    2.0 * (-x * x).exp() * st * s - tau * SQRT_PI_2 * (st + s) * erfc(x)
}

/// Half the `tau = 0` bracket: `((pi - theta) cos theta + sin theta) / 2`.
#[inline]
fn closed_half_bracket(theta: f64) -> f64 {
    0.5 * ((PI - theta) * theta.cos() + theta.sin())
}

/// `J(theta | tau)` by adaptive quadrature, with no closed-form dispatch.
pub fn reduced_integral_quadrature(theta: f64, tau: f64) -> f64 {
    let upper = 0.5 * (PI - theta);
    quadrature::adaptive(|phi| reduced_integrand(phi, theta, tau), 0.0, upper, QUAD_TOL)
}

/// `J(theta | tau)`, using the closed form when `tau` is zero.
pub fn reduced_integral(theta: f64, tau: f64) -> Result<f64> {
    check_theta(theta)?;
    check_tau(tau)?;
    if tau < TAU_ZERO {
        return Ok(closed_half_bracket(theta));
    }
    Ok(reduced_integral_quadrature(theta, tau))
}

/// `I(theta | tau)` evaluated by quadrature alone, for every `tau`.
pub fn integral_i_quadrature(theta: f64, tau: f64) -> f64 {
    reduced_integral_quadrature(theta, tau) + tau * SQRT_PI_2 * (1.0 + theta.cos())
}

/// The one-dimensional integral `I(theta | tau)` of the sparse kernel.
pub fn integral_i(theta: f64, tau: f64) -> Result<f64> {
    let j = reduced_integral(theta, tau)?;
    Ok(j + tau * SQRT_PI_2 * (1.0 + theta.cos()))
}

/// The weight scale that keeps representation norms fixed from layer to layer.
pub fn sigma_star(tau: f64) -> Result<f64> {
    // I(0 | tau) - tau sqrt(2 pi) = J(0 | tau)
    let denom = reduced_integral(0.0, tau)?;
    if !(denom > 0.0) {
        return Err(Error::Numerical(format!("sigma* denominator is not positive ({denom:e}) at tau = {tau}")));
    }
    Ok((PI / denom).sqrt())
}

/// Clamps a cosine into `[-1, 1]`, rejecting values beyond the clamp band.
pub fn clamp_cosine(c: f64) -> Result<f64> {
    if !c.is_finite() || c.abs() > 1.0 + COSINE_CLAMP {
        return Err(Error::Domain(format!("cosine {c} is outside [-1, 1]")));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// Normalized layer map `c -> c'` of cosine similarities.
pub fn cosine_map(c: f64, tau: f64, sigma: f64) -> Result<f64> {
    let c = clamp_cosine(c)?;
    let theta = c.acos();
    let j = reduced_integral(theta, tau)?;
    Ok(sigma * sigma / PI * j)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Single-hidden-layer sparse kernel between two raw inputs.
pub fn kernel_single(x_p: &[f64], x_q: &[f64], config: &KernelConfig) -> Result<f64> {
    if x_p.len() != x_q.len() {
        return Err(Error::Dimension(format!("input lengths differ: {} vs {}", x_p.len(), x_q.len())));
    }
    if x_p.iter().chain(x_q).any(|v| !v.is_finite()) {
        return Err(Error::Domain("inputs must be finite".into()));
    }
    let np = norm(x_p);
    let nq = norm(x_q);
    if np == 0.0 || nq == 0.0 {
        return Err(Error::Domain("kernel inputs must have non-zero norm".into()));
    }
    let dot: f64 = x_p.iter().zip(x_q).map(|(a, b)| a * b).sum();
    let c = (dot / (np * nq)).clamp(-1.0, 1.0);
    let j = reduced_integral(c.acos(), config.tau)?;
    let s2 = config.sigma * config.sigma;
    Ok(s2 / PI * np * nq * j + config.offset)
}

/// The `f = 0.5` (arc-cosine, degree one) kernel between unit inputs at angle `theta`.
pub fn arccos_kernel_closed(theta: f64, sigma: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(sigma * sigma / (2.0 * PI) * ((PI - theta) * theta.cos() + theta.sin()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{normal_pdf, normal_sf};
    use std::f64::consts::FRAC_PI_2;

    /// sigma^2 E[(z1 - tau)+ (z2 - tau)+] for unit normals with correlation c,
    /// integrating over z1 with the conditional mean of z2 in closed form.
    fn gaussian_expectation_oracle(c: f64, tau: f64, sigma: f64) -> f64 {
        if c >= 1.0 {
            // E[(z - tau)+^2]
            return sigma * sigma * ((1.0 + tau * tau) * normal_sf(tau) - tau * normal_pdf(tau));
        }
        let s = (1.0 - c * c).sqrt();
        let inner = |z1: f64| {
            let m = c * z1 - tau;
            let cond = if s > 0.0 { m * normal_sf(-m / s) + s * normal_pdf(m / s) } else { m.max(0.0) };
            normal_pdf(z1) * (z1 - tau) * cond
        };
        let v = quadrature::composite(inner, tau, tau + 40.0, 4000);
        sigma * sigma * v
    }

    #[test]
    fn tau_examples() {
        assert_eq!(tau_from_f(0.5).unwrap(), 0.0);
        let f1 = normal_sf(1.0);
        assert!((tau_from_f(f1).unwrap() - 1.0).abs() < 1e-12);
        assert!((tau_from_f(0.01).unwrap() - 2.326_347_874_040_841).abs() < 1e-12);
    }

    #[test]
    fn tau_matches_bisection_oracle() {
        for &f in &[0.3, 0.158_655, 0.05, 0.01, 1e-6] {
            let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if normal_sf(mid) > f {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = tau_from_f(f).unwrap();
            assert!((tau - 0.5 * (lo + hi)).abs() < 1e-12, "f={f}");
        }
    }

    #[test]
    fn tau_rejects_out_of_range() {
        for f in [0.0, -0.1, 0.50001, 1.0, f64::NAN] {
            assert!(matches!(tau_from_f(f), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn integral_examples() {
        assert!((integral_i(0.0, 0.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((integral_i(FRAC_PI_2, 0.0).unwrap() - 0.5).abs() < 1e-15);
        for tau in [0.0, 0.3, 1.0, 2.5] {
            assert!(integral_i(PI, tau).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_reduces_to_closed_form_at_zero_tau() {
        for i in 0..=200 {
            let theta = PI * i as f64 / 200.0;
            let q = 2.0 * integral_i_quadrature(theta, 0.0);
            let closed = (PI - theta) * theta.cos() + theta.sin();
            assert!((q - closed).abs() < 1e-9, "theta={theta}");
        }
    }

    #[test]
    fn diagonal_matches_rectified_second_moment() {
        // J(0 | tau) = pi E[(z - tau)+^2]
        for tau in [0.1, 0.5, 1.0, 2.0, 3.0] {
            let closed = PI * ((1.0 + tau * tau) * normal_sf(tau) - tau * normal_pdf(tau));
            let j = reduced_integral(0.0, tau).unwrap();
            assert!((j - closed).abs() < 1e-12, "tau={tau}: {j} vs {closed}");
        }
    }

    #[test]
    fn cosine_map_matches_gaussian_expectation() {
        for &tau in &[0.0, 0.4, 1.2, 2.3] {
            let sigma = sigma_star(tau).unwrap();
            for &c in &[-0.9, -0.3, 0.0, 0.5, 0.9, 0.999] {
                let direct = cosine_map(c, tau, sigma).unwrap();
                let oracle = gaussian_expectation_oracle(c, tau, sigma);
                assert!((direct - oracle).abs() < 1e-9, "tau={tau} c={c}: {direct} vs {oracle}");
            }
        }
    }

    #[test]
    fn sigma_star_examples() {
        assert!((sigma_star(0.0).unwrap() - SQRT_2).abs() < 1e-12);
        let s = sigma_star(1.0).unwrap();
        let identity = s * s / PI * (integral_i(0.0, 1.0).unwrap() - (2.0 * PI).sqrt());
        assert!((identity - 1.0).abs() < 1e-10);
        for tau in [0.2, 0.8, 2.0] {
            let s = sigma_star(tau).unwrap();
            assert!((cosine_map(1.0, tau, s).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn cosine_map_examples() {
        assert!((cosine_map(0.0, 0.0, SQRT_2).unwrap() - 1.0 / PI).abs() < 1e-15);
        for tau in [0.0, 0.7, 2.0] {
            for sigma in [0.5, SQRT_2, 3.0] {
                assert!(cosine_map(-1.0, tau, sigma).unwrap().abs() < 1e-15);
            }
        }
        assert!(cosine_map(1.0 + 1e-13, 0.5, 1.0).is_ok());
        assert!(matches!(cosine_map(1.0 + 1e-9, 0.5, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cosine_map_stays_in_unit_interval_under_sigma_star() {
        for tau in [0.0, 0.5, 1.5, 2.5] {
            let s = sigma_star(tau).unwrap();
            for i in 0..=100 {
                let c = -1.0 + 2.0 * i as f64 / 100.0;
                let v = cosine_map(c, tau, s).unwrap();
                assert!((-1e-15..=1.0 + 1e-12).contains(&v), "tau={tau} c={c} v={v}");
            }
        }
    }

    #[test]
    fn kernel_single_examples() {
        let cfg = KernelConfig::new(0.5).unwrap();
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let m1 = [-1.0, 0.0];
        assert!((kernel_single(&e1, &e1, &cfg).unwrap() - 1.0).abs() < 1e-15);
        assert!((kernel_single(&e1, &e2, &cfg).unwrap() - 1.0 / PI).abs() < 1e-15);
        let sparse = KernelConfig::new(0.2).unwrap().with_offset(0.25).unwrap();
        assert!((kernel_single(&e1, &m1, &sparse).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(kernel_single(&[0.0, 0.0], &e1, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_single_diagonal_is_norm_squared_under_sigma_star() {
        for f in [0.5, 0.3, 0.1, 0.02] {
            let cfg = KernelConfig::new(f).unwrap().with_offset(0.5).unwrap();
            let x = [0.3, -1.2, 2.0];
            let n2: f64 = x.iter().map(|v| v * v).sum();
            let k = kernel_single(&x, &x, &cfg).unwrap();
            assert!((k - (n2 + 0.5)).abs() < 1e-9, "f={f}");
        }
    }

    #[test]
    fn kernel_single_is_symmetric() {
        let cfg = KernelConfig::new(0.17).unwrap();
        let a = [0.3, -1.2, 2.0];
        let b = [1.1, 0.4, -0.7];
        assert_eq!(kernel_single(&a, &b, &cfg).unwrap(), kernel_single(&b, &a, &cfg).unwrap());
    }

    #[test]
    fn halving_panel_width_changes_integral_below_tolerance() {
        for &tau in &[0.0, 0.5, 1.5, 2.5] {
            for &theta in &[0.0, 0.7, 1.9, 3.0] {
                let upper = 0.5 * (PI - theta);
                let g = |phi| reduced_integrand(phi, theta, tau);
                let coarse = quadrature::composite(g, 0.0, upper, 8);
                let fine = quadrature::composite(g, 0.0, upper, 16);
                assert!((coarse - fine).abs() <= 1e-10, "tau={tau} theta={theta}");
                let adaptive = reduced_integral_quadrature(theta, tau);
                assert!((adaptive - fine).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn arccos_closed_examples() {
        assert!((arccos_kernel_closed(0.0, SQRT_2).unwrap() - 1.0).abs() < 1e-15);
        assert!(arccos_kernel_closed(PI, SQRT_2).unwrap().abs() < 1e-15);
        assert!((arccos_kernel_closed(FRAC_PI_2, SQRT_2).unwrap() - 1.0 / PI).abs() < 1e-15);
    }
}
