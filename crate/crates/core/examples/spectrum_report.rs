//! Eigenspectrum, effective dimensionality and task alignment of deep Grams.

use sparse_nngp::data::circulant_task;
use sparse_nngp::gram::gram_deep;
use sparse_nngp::kernel::KernelConfig;
use sparse_nngp::spectral::{alignment_curve, decompose, effective_dim};

fn main() -> sparse_nngp::Result<()> {
    let ds = circulant_task(400, 2)?;
    let none = nalgebra::DMatrix::zeros(0, 2);
    for (f, depth) in [(0.5, 1), (0.5, 10), (0.1, 10)] {
        let cfg = KernelConfig::new(f)?.with_depth(depth)?;
        let k = gram_deep(&ds.x, &none, &cfg)?.k_train;
        let s = decompose(&k, &ds.y)?;
        let (_, auc) = alignment_curve(&s.v_bar)?;
        println!(
            "f = {f:<4} L = {depth:<2} N = {:<4} ED = {:>8.2} AUC = {auc:.4} eta[1..4] = {:.3e} {:.3e} {:.3e}",
            s.n_nonzero,
            effective_dim(&s.eta)?,
            s.eta[1],
            s.eta[2],
            s.eta[3]
        );
    }
    Ok(())
}
