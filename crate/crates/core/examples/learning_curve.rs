//! Predicted generalization error as the training set grows, for a power-law spectrum.

use sparse_nngp::theory::predict;

fn main() -> sparse_nngp::Result<()> {
    let n = 500;
    let eta: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-1.5)).collect();
    let v: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-1.2)).collect();
    println!("{:>6} {:>12} {:>12} {:>8}", "P", "E_g", "kappa", "gamma");
    for p in [1, 5, 20, 50, 100, 200, 400] {
        for ridge in [0.0, 1e-3] {
            let t = predict(&eta, &v, p, ridge)?;
            println!("{p:>6} {:>12.6} {:>12.4e} {:>8.4}  ridge {ridge}", t.e_g, t.kappa, t.gamma);
        }
    }
    Ok(())
}
