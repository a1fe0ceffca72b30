//! Dense symmetric linear algebra on `nalgebra` matrices, backed by `faer`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

/// Eigendecomposition `A = V diag(values) V^T` with eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn check_square(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{what} must be square, got {}x{}", a.nrows(), a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("{what} has non-finite entries")));
    }
    Ok(())
}

/// Largest `|A_ij - A_ji|` relative to the largest `|A_ij|`.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Symmetric eigendecomposition reading the lower triangle.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    check_square(a, "matrix")?;
    let evd = to_faer(a)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = DVector::from_fn(s.nrows(), |i, _| s[i]);
    Ok(SymEigen { values, vectors: from_faer(evd.U()) })
}

/// Solves `A X = B` for symmetric positive-definite `A`; `None` when the
/// factorization breaks down.
pub fn cholesky_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    check_square(a, "matrix")?;
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!("right-hand side has {} rows, matrix has {}", b.nrows(), a.nrows())));
    }
    let Ok(llt) = to_faer(a).llt(Side::Lower) else {
        return Ok(None);
    };
    let x = llt.solve(to_faer(b));
    let x = from_faer(x.as_ref());
    if x.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    Ok(Some(x))
}

impl SymEigen {
    /// Number of eigenvalues above `rcond` times the largest magnitude.
    pub fn rank(&self, rcond: f64) -> usize {
        let cut = rcond * self.values.amax();
        self.values.iter().filter(|&&v| v > cut).count()
    }

    /// `A^+ B`, discarding eigenvalues at or below `rcond` times the largest.
    pub fn pinv_solve(&self, b: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
        let n = self.values.len();
        if b.nrows() != n {
            return Err(Error::Dimension(format!("right-hand side has {} rows, matrix has {n}", b.nrows())));
        }
        let cut = rcond * self.values.amax();
        let keep: Vec<usize> = (0..n).filter(|&i| self.values[i] > cut).collect();
        if keep.is_empty() {
            return Err(Error::Singular(format!("no eigenvalue above relative cutoff {rcond:e}")));
        }
        let v = self.vectors.select_columns(&keep);
        let mut proj = v.transpose() * b;
        for (r, &i) in keep.iter().enumerate() {
            let inv = 1.0 / self.values[i];
            proj.row_mut(r).scale_mut(inv);
        }
        Ok(v * proj)
    }
}

/// `A^+ B` for a general `A` through its thin SVD, discarding singular values at or
/// below `rcond` times the largest.
pub fn svd_pinv_solve(a: &DMatrix<f64>, b: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    if b.nrows() != a.nrows() {
        return Err(Error::Dimension(format!("right-hand side has {} rows, matrix has {}", b.nrows(), a.nrows())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(DMatrix::zeros(a.ncols(), b.ncols()));
    }
    let svd = to_faer(a).thin_svd().map_err(|e| Error::Numerical(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let top = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.nrows()).filter(|&i| s[i] > rcond * top).collect();
    let u = from_faer(svd.U()).select_columns(&keep);
    let v = from_faer(svd.V()).select_columns(&keep);
    let mut proj = u.transpose() * b;
    for (r, &i) in keep.iter().enumerate() {
        proj.row_mut(r).scale_mut(1.0 / s[i]);
    }
    Ok(v * proj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn eigen_reconstructs() {
        let a = spd(30);
        let e = sym_eigen(&a).unwrap();
        assert!(e.values.as_slice().windows(2).all(|w| w[0] <= w[1]));
        let back = &e.vectors * DMatrix::from_diagonal(&e.values) * e.vectors.transpose();
        assert!((back - &a).amax() < 1e-12);
    }

    #[test]
    fn cholesky_matches_lu() {
        let a = spd(25);
        let b = DMatrix::from_fn(25, 3, |i, j| (i + j) as f64);
        let x = cholesky_solve(&a, &b).unwrap().unwrap();
        let y = a.clone().lu().solve(&b).unwrap();
        assert!((x - y).amax() < 1e-9);
    }

    #[test]
    fn cholesky_reports_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let b = DMatrix::from_element(2, 1, 1.0);
        assert!(cholesky_solve(&a, &b).unwrap().is_none());
    }

    #[test]
    fn pinv_of_rank_deficient() {
        let u = DMatrix::from_fn(6, 2, |i, j| (i as f64 + 1.0).powi(j as i32));
        let a = &u * u.transpose();
        let e = sym_eigen(&a).unwrap();
        assert_eq!(e.rank(PINV_RCOND), 2);
        let ident = e.pinv_solve(&a, PINV_RCOND).unwrap();
        // A A^+ A = A
        assert!((&a * ident - &a).amax() < 1e-9);
    }

    #[test]
    fn svd_pinv_matches_nalgebra() {
        let a = DMatrix::from_fn(7, 4, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let b = DMatrix::from_fn(7, 2, |i, j| (i as f64) - (j as f64));
        let ours = svd_pinv_solve(&a, &b, PINV_RCOND).unwrap();
        let oracle = a.clone().pseudo_inverse(1e-10).unwrap() * &b;
        assert!((ours - oracle).amax() < 1e-10);
        let wide = a.transpose();
        let b = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let ours = svd_pinv_solve(&wide, &b, PINV_RCOND).unwrap();
        let oracle = wide.clone().pseudo_inverse(1e-10).unwrap() * &b;
        assert!((ours - oracle).amax() < 1e-10);
    }
}
