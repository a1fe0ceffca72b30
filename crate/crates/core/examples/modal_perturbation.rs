//! First-order change of modal errors around a flat spectrum, against the full theory,
//! plus the analytic gradient of the generalization error.

use sparse_nngp::theory::{grad_eg, modal_errors, perturb_modal};

fn main() -> sparse_nngp::Result<()> {
    let (n, p) = (200, 80);
    let eta = 1.0 / n as f64;
    let alpha = p as f64 / n as f64;
    let d: Vec<f64> = (0..n).map(|i| 0.01 * eta * (1.0 - 2.0 * i as f64 / n as f64)).collect();
    let base = modal_errors(&vec![eta; n], p, 0.0)?.e_rho;
    let moved: Vec<f64> = d.iter().map(|x| eta + x).collect();
    let full = modal_errors(&moved, p, 0.0)?.e_rho;
    let lin = perturb_modal(&d, alpha, eta)?;
    for i in [0, n / 4, n / 2, 3 * n / 4, n - 1] {
        println!("mode {i:>3}: exact {:+.3e}  first order {:+.3e}", full[i] - base[i], lin[i]);
    }
    let v = vec![1.0 / n as f64; n];
    let g = grad_eg(&moved, &v, p, 0.0)?;
    println!("dE_g/deta at the first and last modes: {:+.4e} {:+.4e}", g[0], g[n - 1]);
    Ok(())
}
