//! Error-function family on `f64`.
//!
//! `erf`/`erfc` come from `libm`; the inverses are computed here from a
//! rational initial guess polished with Newton steps on `erfc`, which keeps
//! full relative accuracy deep in the tail where `1 - y` would cancel.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};

pub use libm::{erf, erfc};

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Upper tail mass `P(Z > x)` of the standard normal.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Initial guess for `erfc_inv`, from Giles' single-precision approximation.
fn erfc_inv_guess(q: f64) -> f64 {
    // (1 - y)(1 + y) with y = 1 - q, evaluated without cancellation.
    let w = -(q * (2.0 - q)).ln();
    let x = 1.0 - q;
    let p = if w < 5.0 {
        let w = w - 2.5;
        let mut p = 2.810_226_36e-08;
        for c in [
            3.432_739_39e-07,
            -3.523_387_7e-06,
            -4.391_506_54e-06,
            0.000_218_580_87,
            -0.001_253_725_03,
            -0.004_177_681_64,
            0.246_640_727,
            1.501_409_41,
        ] {
            p = c + p * w;
        }
        p
    } else {
        let w = w.sqrt() - 3.0;
        let mut p = -0.000_200_214_257;
        for c in [
            0.000_100_950_558,
            0.001_349_343_22,
            -0.003_673_428_44,
            0.005_739_507_73,
            -0.007_622_461_3,
            0.009_438_870_47,
            1.001_674_06,
            2.832_976_82,
        ] {
            p = c + p * w;
        }
        p
    };
    p * x
}

/// Inverse complementary error function on `(0, 2)`.
///
/// Returns `±inf` at the open endpoints and `NaN` outside.
pub fn erfc_inv(q: f64) -> f64 {
    if q.is_nan() || !(0.0..=2.0).contains(&q) {
        return f64::NAN;
    }
    if q == 0.0 {
        return f64::INFINITY;
    }
    if q == 2.0 {
        return f64::NEG_INFINITY;
    }
    if q == 1.0 {
        return 0.0;
    }
    if q < 1e-10 {
        return erfc_inv_tail(q);
    }
    let mut x = erfc_inv_guess(q);
    for _ in 0..8 {
        let r = erfc(x) - q;
        // d/dx erfc(x) = -2/sqrt(pi) exp(-x^2)
        let d = -FRAC_2_SQRT_PI * (-x * x).exp();
        if d == 0.0 {
            break;
        }
        // Halley correction: erfc'' / erfc' = -2x
        let step = r / d;
        let step = step / (1.0 + x * step);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1e-300) {
            break;
        }
    }
    x
}

/// Deep-tail inverse: Newton on `ln erfc(x) = ln q` from the asymptotic guess
/// `x^2 = -ln(q x sqrt(pi))`.
fn erfc_inv_tail(q: f64) -> f64 {
    let target = q.ln();
    let mut x = (-target).sqrt();
    for _ in 0..3 {
        x = (-(q * x * PI.sqrt()).ln()).sqrt();
    }
    for _ in 0..20 {
        let e = erfc(x);
        if e <= 0.0 {
            break;
        }
        let r = e.ln() - target;
        let d = -FRAC_2_SQRT_PI * (-x * x).exp() / e;
        let step = r / d;
        x -= step;
        if step.abs() <= 1e-16 * x {
            break;
        }
    }
    x
}

/// Inverse error function on `(-1, 1)`.
pub fn erf_inv(y: f64) -> f64 {
    if y.is_nan() || !(-1.0..=1.0).contains(&y) {
        return f64::NAN;
    }
    if y < 0.0 {
        return -erfc_inv(1.0 + y);
    }
    erfc_inv(1.0 - y)
}
