//! How cosine similarity evolves with depth: the scalar map against a deep Gram.

use nalgebra::DMatrix;
use sparse_nngp::gram::gram_layers;
use sparse_nngp::kernel::{cosine_map, KernelConfig};
use sparse_nngp::lookup::shared_tables;

fn main() -> sparse_nngp::Result<()> {
    let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
    let none = DMatrix::zeros(0, 2);
    for f in [0.05, 0.2, 0.5] {
        let cfg = KernelConfig::new(f)?;
        let layers = gram_layers(&x, &none, &cfg, &*shared_tables().get(f)?, 12)?;
        let mut c: f64 = 0.6;
        print!("f = {f:<4}");
        for g in &layers {
            c = cosine_map(c, cfg.tau, cfg.sigma)?;
            let k = &g.k_train;
            let from_gram = k[(0, 1)] / (k[(0, 0)] * k[(1, 1)]).sqrt();
            print!(" {from_gram:.4}");
            assert!((from_gram - c).abs() < 1e-6);
        }
        println!();
    }
    Ok(())
}
