//! Train and test Gram matrices pushed through the layer recursion.
//!
//! Norms are tracked apart from cosines: each layer maps the cosine of every
//! pair through a [`LookupTable`] and rescales by the geometric mean of the
//! two squared norms, so `sigma != sigma*` only rescales and never overflows
//! the table's domain.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{KernelConfig, COSINE_CLAMP};
use crate::lookup::{shared_tables, LookupTable, TableCache};

#[derive(Debug, Clone)]
pub struct GramPair {
    /// `P x P`, symmetric.
    pub k_train: DMatrix<f64>,
    /// `T x P`.
    pub k_cross: DMatrix<f64>,
    pub train_norms_sq: Vec<f64>,
    pub test_norms_sq: Vec<f64>,
    pub layer: usize,
}

impl GramPair {
    pub fn n_train(&self) -> usize {
        self.k_train.nrows()
    }

    pub fn n_test(&self) -> usize {
        self.k_cross.nrows()
    }

    /// Splits a Gram over all samples into train and test blocks.
    pub fn from_full(k_full: &DMatrix<f64>, train_idx: &[usize], test_idx: &[usize], layer: usize) -> Result<Self> {
        let m = k_full.nrows();
        if k_full.ncols() != m {
            return Err(Error::Dimension(format!("full Gram must be square, got {}x{}", m, k_full.ncols())));
        }
        if let Some(&bad) = train_idx.iter().chain(test_idx).find(|&&i| i >= m) {
            return Err(Error::Dimension(format!("sample index {bad} out of range for {m}")));
        }
        let k_train = DMatrix::from_fn(train_idx.len(), train_idx.len(), |i, j| k_full[(train_idx[i], train_idx[j])]);
        let k_cross = DMatrix::from_fn(test_idx.len(), train_idx.len(), |i, j| k_full[(test_idx[i], train_idx[j])]);
        Ok(Self {
            train_norms_sq: train_idx.iter().map(|&i| k_full[(i, i)]).collect(),
            test_norms_sq: test_idx.iter().map(|&i| k_full[(i, i)]).collect(),
            k_train,
            k_cross,
            layer,
        })
    }

    /// Adds `offset` to every kernel entry, keeping the stored norms equal to the diagonal.
    pub fn with_offset(mut self, offset: f64) -> Self {
        if offset != 0.0 {
            self.k_train.add_scalar_mut(offset);
            self.k_cross.add_scalar_mut(offset);
            self.train_norms_sq.iter_mut().for_each(|v| *v += offset);
            self.test_norms_sq.iter_mut().for_each(|v| *v += offset);
        }
        self
    }

    /// Writes `k_train` as CSV, one matrix row per line, 17 significant digits.
    pub fn write_train_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_matrix_csv(&self.k_train, path)
    }
}

/// Writes a matrix as headerless CSV with round-trip precision.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn dot(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut s = 0.0;
    for k in 0..a.ncols() {
        s += a[(i, k)] * b[(j, k)];
    }
    s
}

fn check_rows(x: &DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    (0..x.nrows())
        .map(|i| {
            let mut n = 0.0;
            for k in 0..x.ncols() {
                let v = x[(i, k)];
                if !v.is_finite() {
                    return Err(Error::Domain(format!("{what} row {i} has a non-finite entry")));
                }
                n += v * v;
            }
            if n == 0.0 {
                return Err(Error::Domain(format!("{what} row {i} has zero norm")));
            }
            Ok(n)
        })
        .collect()
}

/// Fills a symmetric `n x n` matrix from its upper triangle, one row per task.
fn fill_symmetric<F>(n: usize, entry: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let rows: Result<Vec<Vec<f64>>> = (0..n).into_par_iter().map(|i| (i..n).map(|j| entry(i, j)).collect()).collect();
    let rows = rows?;
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            m[(i, i + off)] = v;
            m[(i + off, i)] = v;
        }
    }
    Ok(m)
}

fn fill_dense<F>(r: usize, c: usize, entry: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let rows: Result<Vec<Vec<f64>>> = (0..r).into_par_iter().map(|i| (0..c).map(|j| entry(i, j)).collect()).collect();
    let rows = rows?;
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Layer-0 Gram of raw dot products. Rows of `x_train` and `x_test` are samples.
pub fn input_gram(x_train: &DMatrix<f64>, x_test: &DMatrix<f64>) -> Result<GramPair> {
    if x_test.nrows() > 0 && x_test.ncols() != x_train.ncols() {
        return Err(Error::Dimension(format!(
            "train inputs have {} features, test inputs {}",
            x_train.ncols(),
            x_test.ncols()
        )));
    }
    check_rows(x_train, "train")?;
    check_rows(x_test, "test")?;
    let k_train = fill_symmetric(x_train.nrows(), |i, j| Ok(dot(x_train, i, x_train, j)))?;
    let k_cross = fill_dense(x_test.nrows(), x_train.nrows(), |i, j| Ok(dot(x_test, i, x_train, j)))?;
    let train_norms_sq = (0..k_train.nrows()).map(|i| k_train[(i, i)]).collect();
    let test_norms_sq = (0..x_test.nrows()).map(|i| dot(x_test, i, x_test, i)).collect();
    Ok(GramPair { k_train, k_cross, train_norms_sq, test_norms_sq, layer: 0 })
}

/// Largest amount by which any stored cosine leaves `[-1, 1]`.
fn cosine_violation(g: &GramPair) -> f64 {
    let mut worst = 0.0_f64;
    let mut track = |k: f64, a: f64, b: f64| {
        let c = k / (a * b).sqrt();
        worst = worst.max(c.abs() - 1.0);
        if c.is_nan() {
            worst = f64::INFINITY;
        }
    };
    for j in 0..g.n_train() {
        for i in 0..g.n_train() {
            track(g.k_train[(i, j)], g.train_norms_sq[i], g.train_norms_sq[j]);
        }
        for i in 0..g.n_test() {
            track(g.k_cross[(i, j)], g.test_norms_sq[i], g.train_norms_sq[j]);
        }
    }
    worst
}

/// One layer of the recursion: `K'(p, q) = s * sqrt(K(p,p) K(q,q)) * map(cos)`,
/// where `s = (sigma / table.sigma)^2` rescales the stored map.
pub fn propagate(g: &GramPair, table: &LookupTable, sigma: f64) -> Result<GramPair> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if g.train_norms_sq.len() != g.n_train() || g.test_norms_sq.len() != g.n_test() {
        return Err(Error::Dimension("norm arrays do not match Gram shapes".into()));
    }
    if g.k_cross.nrows() > 0 && g.k_cross.ncols() != g.n_train() {
        return Err(Error::Dimension(format!(
            "cross Gram has {} columns for {} train samples",
            g.k_cross.ncols(),
            g.n_train()
        )));
    }
    if g.train_norms_sq.iter().chain(&g.test_norms_sq).any(|&v| !(v > 0.0)) {
        return Err(Error::Domain("Gram norms must be positive".into()));
    }
    let violation = cosine_violation(g);
    if violation > COSINE_CLAMP {
        return Err(Error::Numerical(format!("cosines leave [-1, 1] by up to {violation:e} at layer {}", g.layer)));
    }
    let scale = (sigma / table.sigma()).powi(2);
    let map = |k: f64, a: f64, b: f64| -> Result<f64> {
        let r = (a * b).sqrt();
        Ok(scale * r * table.eval((k / r).clamp(-1.0, 1.0))?)
    };
    let tn = &g.train_norms_sq;
    let sn = &g.test_norms_sq;
    let k_train = fill_symmetric(g.n_train(), |i, j| map(g.k_train[(i, j)], tn[i], tn[j]))?;
    let k_cross = fill_dense(g.n_test(), g.n_train(), |i, j| map(g.k_cross[(i, j)], sn[i], tn[j]))?;
    let self_scale = scale * table.eval(1.0)?;
    Ok(GramPair {
        train_norms_sq: (0..k_train.nrows()).map(|i| k_train[(i, i)]).collect(),
        test_norms_sq: sn.iter().map(|&v| self_scale * v).collect(),
        k_train,
        k_cross,
        layer: g.layer + 1,
    })
}

/// The depth-`config.depth` Gram pair with the constant offset applied once at the end.
pub fn gram_deep(x_train: &DMatrix<f64>, x_test: &DMatrix<f64>, config: &KernelConfig) -> Result<GramPair> {
    gram_deep_cached(x_train, x_test, config, shared_tables())
}

/// [`gram_deep`] drawing its table from `cache`.
pub fn gram_deep_cached(
    x_train: &DMatrix<f64>,
    x_test: &DMatrix<f64>,
    config: &KernelConfig,
    cache: &TableCache,
) -> Result<GramPair> {
    let table = cache.get(config.f)?;
    gram_deep_with_table(x_train, x_test, config, &table)
}

/// [`gram_deep`] with an explicit table, which must be built for `config.f`.
pub fn gram_deep_with_table(
    x_train: &DMatrix<f64>,
    x_test: &DMatrix<f64>,
    config: &KernelConfig,
    table: &LookupTable,
) -> Result<GramPair> {
    if table.f() != config.f {
        return Err(Error::Config(format!("table built for f = {} used with f = {}", table.f(), config.f)));
    }
    let mut g = input_gram(x_train, x_test)?;
    for _ in 0..config.depth {
        g = propagate(&g, table, config.sigma)?;
    }
    Ok(g.with_offset(config.offset))
}

/// Every layer's Gram pair from 1 through `max_depth`, sharing the recursion.
pub fn gram_layers(
    x_train: &DMatrix<f64>,
    x_test: &DMatrix<f64>,
    config: &KernelConfig,
    table: &LookupTable,
    max_depth: usize,
) -> Result<Vec<GramPair>> {
    let mut out = Vec::with_capacity(max_depth);
    let mut g = input_gram(x_train, x_test)?;
    for _ in 0..max_depth {
        g = propagate(&g, table, config.sigma)?;
        out.push(g.clone());
    }
    Ok(out.into_iter().map(|g| g.with_offset(config.offset)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{cosine_map, kernel_single, sigma_star};
    use crate::lookup::build_lookup;

    fn unit_rows(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut x = DMatrix::from_fn(p, n, |_, _| next());
        for mut row in x.row_iter_mut() {
            let norm = row.norm();
            row /= norm;
        }
        x
    }

    #[test]
    fn input_gram_examples() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let t = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let g = input_gram(&x, &t).unwrap();
        assert_eq!(g.k_train, DMatrix::identity(2, 2));
        assert_eq!(g.k_cross[(0, 1)], 1.0);
        assert_eq!(g.test_norms_sq, vec![1.0]);
    }

    #[test]
    fn input_gram_names_zero_row() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let e = input_gram(&x, &DMatrix::zeros(0, 2)).unwrap_err();
        assert!(e.to_string().contains("row 1"), "{e}");
    }

    #[test]
    fn depth_one_matches_direct_kernel() {
        let x = unit_rows(12, 5, 3).scale(1.7);
        let t = unit_rows(4, 5, 9);
        let cfg = KernelConfig::new(0.2).unwrap();
        let g = gram_deep(&x, &t, &cfg.clone().with_depth(1).unwrap()).unwrap();
        let row = |m: &DMatrix<f64>, i: usize| m.row(i).iter().copied().collect::<Vec<_>>();
        for i in 0..12 {
            for j in 0..12 {
                let k = kernel_single(&row(&x, i), &row(&x, j), &cfg).unwrap();
                assert!((g.k_train[(i, j)] - k).abs() < 1e-8);
            }
            for j in 0..4 {
                let k = kernel_single(&row(&t, j), &row(&x, i), &cfg).unwrap();
                assert!((g.k_cross[(j, i)] - k).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn two_layers_compose_the_scalar_map() {
        let x = unit_rows(6, 4, 1);
        let cfg = KernelConfig::new(0.3).unwrap().with_depth(2).unwrap();
        let g = gram_deep(&x, &DMatrix::zeros(0, 4), &cfg).unwrap();
        let g0 = input_gram(&x, &DMatrix::zeros(0, 4)).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let c = g0.k_train[(i, j)];
                let twice = cosine_map(cosine_map(c, cfg.tau, cfg.sigma).unwrap(), cfg.tau, cfg.sigma).unwrap();
                assert!((g.k_train[(i, j)] - twice).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn orthogonal_inputs_map_to_one_over_pi() {
        let x = DMatrix::identity(2, 2);
        let cfg = KernelConfig::new(0.5).unwrap();
        let g = gram_deep(&x, &DMatrix::zeros(0, 2), &cfg).unwrap();
        assert!((g.k_train[(0, 1)] - 1.0 / std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn norms_survive_many_layers() {
        let x = unit_rows(10, 3, 5).scale(3.0);
        for f in [0.05, 0.5] {
            let cfg = KernelConfig::new(f).unwrap();
            let table = build_lookup(f, 2049, cfg.sigma).unwrap();
            let layers = gram_layers(&x, &DMatrix::zeros(0, 3), &cfg, &table, 50).unwrap();
            for g in &layers {
                for (i, &n) in g.train_norms_sq.iter().enumerate() {
                    assert_eq!(n, g.k_train[(i, i)]);
                    assert!((n - 9.0).abs() <= 1e-8 * 9.0, "f={f} layer {} {n}", g.layer);
                }
            }
        }
    }

    #[test]
    fn non_default_sigma_scales_norms() {
        let x = unit_rows(3, 3, 2);
        let cfg = KernelConfig::new(0.5).unwrap().with_sigma(1.0).unwrap().with_depth(2).unwrap();
        let g = gram_deep(&x, &DMatrix::zeros(0, 3), &cfg).unwrap();
        // each layer multiplies norms by sigma^2 / sigma*^2 = 1/2
        assert!((g.train_norms_sq[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn offset_added_once() {
        let x = unit_rows(4, 3, 7);
        let base = KernelConfig::new(0.1).unwrap().with_depth(3).unwrap();
        let g = gram_deep(&x, &x, &base).unwrap();
        let h = gram_deep(&x, &x, &base.clone().with_offset(0.25).unwrap()).unwrap();
        assert!((&h.k_train - &g.k_train).iter().all(|d| (d - 0.25).abs() < 1e-15));
        assert!((&h.k_cross - &g.k_cross).iter().all(|d| (d - 0.25).abs() < 1e-15));
        assert_eq!(h.train_norms_sq[2], h.k_train[(2, 2)]);
    }

    #[test]
    fn deep_layers_stay_symmetric_psd() {
        let x = unit_rows(200, 20, 11);
        let cfg = KernelConfig::new(0.2).unwrap();
        let table = build_lookup(0.2, 2049, cfg.sigma).unwrap();
        for g in gram_layers(&x, &DMatrix::zeros(0, 20), &cfg, &table, 6).unwrap() {
            assert_eq!(g.k_train, g.k_train.transpose());
            let e = crate::linalg::sym_eigen(&g.k_train).unwrap();
            let top = e.values.max();
            assert!(e.values.min() >= -1e-8 * top);
        }
    }

    #[test]
    fn rejects_mismatched_table() {
        let x = unit_rows(3, 2, 1);
        let t = build_lookup(0.3, 129, sigma_star(0.5).unwrap()).unwrap();
        let cfg = KernelConfig::new(0.2).unwrap();
        assert!(matches!(gram_deep_with_table(&x, &x, &cfg, &t), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trips() {
        let x = unit_rows(5, 3, 4);
        let g = gram_deep(&x, &DMatrix::zeros(0, 3), &KernelConfig::new(0.4).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        g.write_train_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for (i, line) in text.lines().enumerate() {
            for (j, v) in line.split(',').enumerate() {
                assert_eq!(v.parse::<f64>().unwrap(), g.k_train[(i, j)]);
            }
        }
    }
}
