//! Single-layer kernel values across sparsity levels, with the f = 0.5 closed form.

use std::f64::consts::PI;

use sparse_nngp::kernel::{arccos_kernel_closed, kernel_single, tau_from_f, KernelConfig};

fn main() -> sparse_nngp::Result<()> {
    let a = [1.0, 0.0];
    println!("{:>6} {:>8} {:>10} {:>10} {:>10}", "f", "tau", "k(0)", "k(pi/3)", "k(pi/2)");
    for f in [0.05, 0.1, 0.2, 0.3, 0.5] {
        let cfg = KernelConfig::new(f)?;
        let row: Vec<f64> = [0.0, PI / 3.0, PI / 2.0]
            .iter()
            .map(|&t| kernel_single(&a, &[t.cos(), t.sin()], &cfg))
            .collect::<sparse_nngp::Result<_>>()?;
        println!("{f:>6} {:>8.4} {:>10.6} {:>10.6} {:>10.6}", tau_from_f(f)?, row[0], row[1], row[2]);
    }
    let cfg = KernelConfig::new(0.5)?;
    let t = PI / 3.0;
    println!(
        "closed form at f = 0.5, theta = pi/3: {:.12} (kernel {:.12})",
        arccos_kernel_closed(t, cfg.sigma)?,
        kernel_single(&a, &[t.cos(), t.sin()], &cfg)?
    );
    Ok(())
}
