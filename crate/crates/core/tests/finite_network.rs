use nalgebra::DMatrix;
use sparse_nngp::gram::gram_deep;
use sparse_nngp::kernel::{sigma_star, tau_from_f, KernelConfig};
use sparse_nngp::simulate::{mc_gram_estimate, BiasMode, FiniteNetSpec};

#[test]
fn deep_finite_gram_tracks_kernel() {
    let x = DMatrix::from_fn(4, 6, |i, j| ((3 * i + 2 * j) as f64 * 0.7).cos() + 0.2);
    // one realization fluctuates ~14% per entry at f = 0.1, so average enough
    // trials to bring the standard error near 1.7%
    for (f, trials) in [(0.1, 64), (0.3, 24), (0.5, 16)] {
        let spec = FiniteNetSpec {
            widths: vec![10_000; 3],
            f,
            sigma: sigma_star(tau_from_f(f).unwrap()).unwrap(),
            seed: 21,
            bias_mode: BiasMode::Gaussian,
        };
        let (mean, _) = mc_gram_estimate(&x, &spec, trials).unwrap();
        let cfg = KernelConfig::new(f).unwrap().with_depth(3).unwrap();
        let g = gram_deep(&x, &DMatrix::zeros(0, 6), &cfg).unwrap();
        let rel = (&mean - &g.k_train).component_div(&g.k_train).amax();
        println!("f={f} trials={trials} max relative deviation {rel:.4}");
        assert!(rel <= 0.05, "f={f} rel {rel}");
    }
}
