//! Wide random sparse networks against the analytic kernel.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use sparse_nngp::kernel::{kernel_single, sigma_star, tau_from_f, KernelConfig};
use sparse_nngp::simulate::{finite_forward, mc_kernel_estimate, BiasMode, FiniteNetSpec};

fn main() -> sparse_nngp::Result<()> {
    let (a, b) = ([1.0, 0.0], [(PI / 3.0).cos(), (PI / 3.0).sin()]);
    for f in [0.1, 0.3, 0.5] {
        let cfg = KernelConfig::new(f)?;
        let est = mc_kernel_estimate(&a, &b, &cfg, 50_000, 16, 7)?;
        let k = kernel_single(&a, &b, &cfg)?;
        println!("f = {f}: kernel {k:.5}, network {:.5} +- {:.5} (z = {:+.2})", est.mean, est.stderr, est.z_score(k));
    }
    let spec = FiniteNetSpec {
        widths: vec![2000, 2000],
        f: 0.1,
        sigma: sigma_star(tau_from_f(0.1)?)?,
        seed: 3,
        bias_mode: BiasMode::Quantile,
    };
    let x = DMatrix::from_row_slice(2, 2, &[a[0], a[1], b[0], b[1]]);
    let h = finite_forward(&x, &spec)?;
    let active = h.row(0).iter().filter(|&&v| v > 0.0).count();
    println!("quantile bias: {active} of 2000 units active in the last layer");
    Ok(())
}
