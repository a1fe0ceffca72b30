//! Kernel ridge regression of a square wave on points around a circle.

use sparse_nngp::data::{circulant_task, subsample};
use sparse_nngp::gram::gram_deep;
use sparse_nngp::kernel::KernelConfig;
use sparse_nngp::regression::{evaluate, krr_predict};

fn main() -> sparse_nngp::Result<()> {
    let ds = subsample(&circulant_task(300, 2)?, 200, 1)?;
    for (f, depth) in [(0.1, 1), (0.5, 1), (0.05, 11), (0.5, 11)] {
        let cfg = KernelConfig::new(f)?.with_depth(depth)?;
        let g = gram_deep(&ds.train_x(), &ds.test_x(), &cfg)?;
        for ridge in [0.0, 1e-2] {
            let mu = krr_predict(&g, &ds.train_y(), ridge)?;
            let p = evaluate(&mu, &ds.test_y(), None)?;
            println!("f = {f:<4} L = {depth:<2} ridge = {ridge:<5} test mse = {:.5}", p.mse);
        }
    }
    Ok(())
}
