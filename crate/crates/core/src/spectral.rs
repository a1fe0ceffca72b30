//! Discrete Mercer decomposition of a Gram over all samples.
//!
//! With samples drawn uniformly from a finite set of `M` points, eigenvalues of
//! the `M x M` Gram divided by the number `N` of non-zero ones estimate the
//! kernel's spectrum, and eigenvectors scaled by `sqrt(M)` are the
//! eigenfunctions sampled at the points (unit mean square).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{relative_asymmetry, sym_eigen};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const NONZERO_RCOND: f64 = 1e-12;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Descending, divided by `n_nonzero`.
    pub eta: Vec<f64>,
    /// `M x N`, eigenvectors scaled by `sqrt(M)`.
    pub phi: DMatrix<f64>,
    /// `N x k` target coefficients.
    pub v_bar: DMatrix<f64>,
    pub m_total: usize,
    pub n_nonzero: usize,
    /// Mean-square target power in the discarded null space, summed over columns.
    pub residual_power: f64,
}

impl Spectrum {
    /// Squared target coefficients summed over output columns.
    pub fn v_bar_sq_total(&self) -> Vec<f64> {
        self.v_bar.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect()
    }

    /// Writes `rho,eta,v_bar_sq_total` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "rho,eta,v_bar_sq_total").map_err(io)?;
        for (rho, (eta, v2)) in self.eta.iter().zip(self.v_bar_sq_total()).enumerate() {
            writeln!(w, "{rho},{eta:.16e},{v2:.16e}").map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Spectrum of `k_full` (all `M` samples) with coefficients of the targets `y_full`.
pub fn decompose(k_full: &DMatrix<f64>, y_full: &DMatrix<f64>) -> Result<Spectrum> {
    let m = k_full.nrows();
    if k_full.ncols() != m {
        return Err(Error::Dimension(format!("Gram must be square, got {m}x{}", k_full.ncols())));
    }
    if y_full.nrows() != m {
        return Err(Error::Dimension(format!("targets have {} rows for {m} samples", y_full.nrows())));
    }
    let asym = relative_asymmetry(k_full);
    if asym > SYMMETRY_TOL {
        return Err(Error::Domain(format!("Gram is not symmetric (relative asymmetry {asym:e})")));
    }
    let eig = sym_eigen(k_full)?;
    let top = eig.values.max();
    if !(top > 0.0) {
        return Err(Error::Domain("Gram has no positive eigenvalue".into()));
    }
    let bottom = eig.values.min();
    if bottom < -PSD_TOL * top {
        return Err(Error::Domain(format!(
            "Gram is not positive semidefinite: eigenvalue {bottom:e} vs largest {top:e}"
        )));
    }
    let keep: Vec<usize> = (0..m).rev().filter(|&i| eig.values[i] > NONZERO_RCOND * top).collect();
    let n = keep.len();
    let eta: Vec<f64> = keep.iter().map(|&i| eig.values[i] / n as f64).collect();
    let u = eig.vectors.select_columns(&keep);
    let scale = (m as f64).sqrt();
    let v_bar = u.transpose() * y_full / scale;
    let captured: f64 = v_bar.norm_squared();
    let residual_power = (y_full.norm_squared() / m as f64 - captured).max(0.0);
    Ok(Spectrum { eta, phi: u * scale, v_bar, m_total: m, n_nonzero: n, residual_power })
}

/// Participation ratio of the spectrum with its largest eigenvalue left out.
pub fn effective_dim(eta: &[f64]) -> Result<f64> {
    if eta.len() < 2 {
        return Err(Error::Domain(format!("effective dimensionality needs at least 2 eigenvalues, got {}", eta.len())));
    }
    if eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("eigenvalues must be finite".into()));
    }
    let mut sorted = eta.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rest = &sorted[1..];
    let s1: f64 = rest.iter().sum();
    let s2: f64 = rest.iter().map(|v| v * v).sum();
    if s2 == 0.0 {
        return Ok(0.0);
    }
    Ok(s1 * s1 / s2)
}

/// Cumulative fraction of target power captured by the leading modes, and its mean.
pub fn alignment_curve(v_bar: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let power: Vec<f64> = v_bar.row_iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let total: f64 = power.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Domain("target has no power in any mode".into()));
    }
    let mut running = 0.0;
    let curve: Vec<f64> = power
        .iter()
        .map(|p| {
            running += p;
            running / total
        })
        .collect();
    let auc = curve.iter().sum::<f64>() / curve.len() as f64;
    Ok((curve, auc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_gives_flat_spectrum() {
        let s = decompose(&DMatrix::identity(6, 6), &DMatrix::zeros(6, 1)).unwrap();
        assert_eq!(s.n_nonzero, 6);
        assert!(s.eta.iter().all(|&e| (e - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn all_ones_has_one_mode() {
        let m = 7;
        let s = decompose(&DMatrix::from_element(m, m, 1.0), &DMatrix::zeros(m, 1)).unwrap();
        assert_eq!(s.n_nonzero, 1);
        assert!((s.eta[0] - m as f64).abs() < 1e-12);
    }

    #[test]
    fn coefficients_match_direct_projection() {
        let a = DMatrix::from_fn(10, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 - 3.0);
        let k = &a * a.transpose();
        let probe = decompose(&k, &DMatrix::zeros(10, 1)).unwrap();
        let y = probe.phi.columns(1, 1).into_owned();
        let s = decompose(&k, &y).unwrap();
        for rho in 0..s.n_nonzero {
            let direct = (s.phi.column(rho).dot(&y.column(0))) / 10.0;
            assert!((s.v_bar[(rho, 0)] - direct).abs() < 1e-12);
        }
        assert!((s.v_bar[(1, 0)].abs() - 1.0).abs() < 1e-10);
        assert!(s.residual_power < 1e-10);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let mut k = DMatrix::identity(3, 3);
        k[(0, 1)] = 0.1;
        assert!(decompose(&k, &DMatrix::zeros(3, 1)).is_err());
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let e = decompose(&k, &DMatrix::zeros(2, 1)).unwrap_err();
        assert!(e.to_string().contains("semidefinite"));
    }

    #[test]
    fn effective_dim_examples() {
        assert!((effective_dim(&[2.0; 9]).unwrap() - 8.0).abs() < 1e-12);
        assert!((effective_dim(&[4.0, 2.0, 1.0, 1.0]).unwrap() - 16.0 / 6.0).abs() < 1e-14);
        assert_eq!(effective_dim(&[3.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(effective_dim(&[1.0]).is_err());

        let n = 12;
        let c = 0.3;
        let k = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { c });
        let s = decompose(&k, &DMatrix::zeros(n, 1)).unwrap();
        assert!((effective_dim(&s.eta).unwrap() - (n - 1) as f64).abs() < 1e-9);
    }

    #[test]
    fn alignment_examples() {
        let (c, auc) = alignment_curve(&DMatrix::from_column_slice(3, 1, &[2.0, 0.0, 0.0])).unwrap();
        assert_eq!(c, vec![1.0, 1.0, 1.0]);
        assert_eq!(auc, 1.0);
        let (c, _) = alignment_curve(&DMatrix::from_element(4, 1, 0.5)).unwrap();
        for (i, v) in c.iter().enumerate() {
            assert!((v - (i + 1) as f64 / 4.0).abs() < 1e-15);
        }
        let (c, _) = alignment_curve(&DMatrix::from_column_slice(2, 1, &[3f64.sqrt(), 1.0])).unwrap();
        assert!((c[0] - 0.75).abs() < 1e-15 && (c[1] - 1.0).abs() < 1e-15);
        assert!(alignment_curve(&DMatrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn circulant_modes_span_harmonics() {
        let m = 32;
        let row: Vec<f64> = (0..m).map(|d| (2.0 * (2.0 * PI * d as f64 / m as f64).cos()).exp()).collect();
        let k = DMatrix::from_fn(m, m, |i, j| row[(j + m - i) % m]);
        let s = decompose(&k, &DMatrix::zeros(m, 1)).unwrap();
        let u = &s.phi / (m as f64).sqrt();
        let lam: Vec<f64> = s.eta.iter().map(|e| e * s.n_nonzero as f64).collect();
        let top = lam[0];
        for h in 0..m / 2 {
            let expected: f64 = (0..m).map(|d| row[d] * (2.0 * PI * (h * d) as f64 / m as f64).cos()).sum();
            if expected <= 1e-6 * top {
                continue;
            }
            let group: Vec<usize> = (0..lam.len()).filter(|&i| (lam[i] - expected).abs() <= 1e-9 * top).collect();
            assert!(!group.is_empty(), "harmonic {h}");
            let basis = u.select_columns(&group);
            for phase in [0.0, PI / 2.0] {
                let v = DMatrix::from_fn(m, 1, |p, _| (2.0 * PI * (h * p) as f64 / m as f64 + phase).cos());
                if v.norm() < 1e-9 {
                    continue;
                }
                let v = &v / v.norm();
                let proj = &basis * (basis.transpose() * &v);
                assert!((proj - &v).norm() < 1e-8, "harmonic {h}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn round_trip_and_orthonormality(m in 2usize..60, rank in 1usize..8, seed in 0u64..10_000) {
            let mut st = seed;
            let a = DMatrix::from_fn(m, rank, |_, _| {
                st = st.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (st >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            });
            let k = &a * a.transpose();
            let s = decompose(&k, &DMatrix::zeros(m, 1)).unwrap();
            let u = &s.phi / (m as f64).sqrt();
            let gram = u.transpose() * &u;
            prop_assert!((gram - DMatrix::identity(s.n_nonzero, s.n_nonzero)).amax() < 1e-10);
            let n = s.n_nonzero as f64;
            let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                s.n_nonzero, s.eta.iter().map(|e| e * n)));
            let back = &u * lam * u.transpose();
            prop_assert!((back - &k).norm() <= 1e-8 * k.norm());
            prop_assert!(s.eta.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn effective_dim_is_scale_invariant(v in proptest::collection::vec(0.01f64..10.0, 2..40), s in 1e-6f64..1e6) {
            let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
            let a = effective_dim(&v).unwrap();
            let b = effective_dim(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
        }
    }
}
