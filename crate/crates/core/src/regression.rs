//! Kernel ridge regression posterior means and their scores.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::gram::GramPair;
use crate::linalg::{cholesky_solve, sym_eigen, PINV_RCOND};

/// Scored predictions on a test set.
#[derive(Debug, Clone)]
pub struct Prediction {
    /// `T x k` posterior means.
    pub mu: DMatrix<f64>,
    /// Row-wise argmax of `mu`, lowest index on ties.
    pub labels: Vec<usize>,
    pub mse: f64,
    /// `NaN` when no true labels were supplied.
    pub accuracy: f64,
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Config(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    Ok(())
}

/// Dual weights `(K + ridge I)^{-1} Y`, or `K^+ Y` when `ridge = 0`.
pub fn krr_weights(k_train: &DMatrix<f64>, y_train: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    check_ridge(ridge)?;
    let p = k_train.nrows();
    if k_train.ncols() != p {
        return Err(Error::Dimension(format!("train Gram must be square, got {p}x{}", k_train.ncols())));
    }
    if y_train.nrows() != p {
        return Err(Error::Dimension(format!("targets have {} rows for {p} train samples", y_train.nrows())));
    }
    if ridge > 0.0 {
        let mut a = k_train.clone();
        for i in 0..p {
            a[(i, i)] += ridge;
        }
        if let Some(w) = cholesky_solve(&a, y_train)? {
            return Ok(w);
        }
        log::warn!("Cholesky failed at ridge {ridge:e}; falling back to eigendecomposition");
        return sym_eigen(&a)?.pinv_solve(y_train, PINV_RCOND);
    }
    sym_eigen(k_train)?.pinv_solve(y_train, PINV_RCOND)
}

/// Posterior mean `K_cross (K_train + ridge I)^{-1} Y` on the test rows of `g`.
pub fn krr_predict(g: &GramPair, y_train: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if g.n_test() > 0 && g.k_cross.ncols() != g.n_train() {
        return Err(Error::Dimension(format!(
            "cross Gram has {} columns for {} train samples",
            g.k_cross.ncols(),
            g.n_train()
        )));
    }
    let w = krr_weights(&g.k_train, y_train, ridge)?;
    Ok(&g.k_cross * w)
}

/// Index of the largest entry, first one on ties.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Scores `mu` against `y_test`; accuracy compares row argmaxes with `true_labels`.
pub fn evaluate(mu: &DMatrix<f64>, y_test: &DMatrix<f64>, true_labels: Option<&[usize]>) -> Result<Prediction> {
    if mu.shape() != y_test.shape() {
        return Err(Error::Dimension(format!("predictions are {:?}, targets {:?}", mu.shape(), y_test.shape())));
    }
    if let Some(l) = true_labels {
        if l.len() != mu.nrows() {
            return Err(Error::Dimension(format!("{} labels for {} predictions", l.len(), mu.nrows())));
        }
    }
    let labels: Vec<usize> = mu.row_iter().map(|r| argmax(r.iter().copied())).collect();
    let mse = (mu - y_test).norm_squared() / (mu.nrows() * mu.ncols()) as f64;
    let accuracy = match true_labels {
        Some(truth) => {
            let hits = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
            hits as f64 / labels.len() as f64
        }
        None => f64::NAN,
    };
    Ok(Prediction { mu: mu.clone(), labels, mse, accuracy })
}
