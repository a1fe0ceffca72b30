//! Experiment drivers behind the command-line tool: f x L sweeps,
//! theory-vs-experiment grids, Monte-Carlo verification and table management.
//!
//! Every driver returns plain rows; the `write_*` helpers turn them into CSV with
//! 17 significant digits. Grid cells run in parallel and rows come back sorted
//! by `(f, L, trial)`, so output is reproducible for a fixed seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{circulant_task, load_csv, load_idx, subsample_split, Dataset};
use crate::error::{Error, Result};
use crate::gram::{input_gram, propagate, GramPair};
use crate::kernel::{kernel_single, KernelConfig};
use crate::linalg::sym_eigen;
use crate::lookup::{build_lookup, LookupTable, TableCache, FORMAT_VERSION};
use crate::regression::{evaluate, krr_predict, krr_weights};
use crate::simulate::{mc_kernel_estimate, trial_seed};
use crate::spectral::{decompose, effective_dim};
use crate::theory::predict;

/// z-score beyond which a Monte-Carlo check fails.
pub const VERIFY_Z_LIMIT: f64 = 4.0;
/// Probes used by [`inspect_table`] on top of every interval midpoint.
pub const INSPECT_PROBES: usize = 10_001;

/// Where a dataset comes from, as written on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// `circulant:M:blocks`
    Circulant { m_total: usize, n_blocks: usize },
    /// `idx:images:labels`, optionally followed by `:test_images:test_labels`
    Idx { images: PathBuf, labels: PathBuf, test: Option<(PathBuf, PathBuf)> },
    /// `csv:path` (first column label) or `csv-header:path`
    Csv { path: PathBuf, has_header: bool },
}

impl FromStr for DatasetSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("unrecognized dataset descriptor {s:?}"));
        match parts.as_slice() {
            ["circulant", m, b] => Ok(DatasetSource::Circulant {
                m_total: m.parse().map_err(|_| bad())?,
                n_blocks: b.parse().map_err(|_| bad())?,
            }),
            ["circulant", m] => Ok(DatasetSource::Circulant { m_total: m.parse().map_err(|_| bad())?, n_blocks: 2 }),
            ["idx", img, lbl] => Ok(DatasetSource::Idx { images: img.into(), labels: lbl.into(), test: None }),
            ["idx", img, lbl, timg, tlbl] => Ok(DatasetSource::Idx {
                images: img.into(),
                labels: lbl.into(),
                test: Some((timg.into(), tlbl.into())),
            }),
            ["csv", rest @ ..] if !rest.is_empty() => {
                Ok(DatasetSource::Csv { path: rest.join(":").into(), has_header: false })
            }
            ["csv-header", rest @ ..] if !rest.is_empty() => {
                Ok(DatasetSource::Csv { path: rest.join(":").into(), has_header: true })
            }
            _ => Err(bad()),
        }
    }
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Circulant { m_total, n_blocks } => circulant_task(*m_total, *n_blocks),
            DatasetSource::Idx { images, labels, test } => {
                let ds = load_idx(images, labels)?;
                match test {
                    Some((ti, tl)) => ds.with_holdout(load_idx(ti, tl)?),
                    None => Ok(ds),
                }
            }
            DatasetSource::Csv { path, has_header } => load_csv(path, *has_header),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub f_values: Vec<f64>,
    pub depths: Vec<usize>,
    pub ridge: f64,
    pub p_train: usize,
    /// Cap on test samples per split; `None` keeps every remaining row.
    pub p_test: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    pub dataset: DatasetSource,
    pub unit_normalize: bool,
}

impl SweepSpec {
    pub fn new(dataset: DatasetSource, f_values: Vec<f64>, depths: Vec<usize>, p_train: usize) -> Self {
        SweepSpec {
            f_values,
            depths,
            ridge: 0.0,
            p_train,
            p_test: None,
            trials: 1,
            seed: 0,
            dataset,
            unit_normalize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_values.is_empty() || self.depths.is_empty() {
            return Err(Error::Config("f and depth grids must be non-empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.depths.contains(&0) {
            return Err(Error::Config("depths must be at least 1".into()));
        }
        for &f in &self.f_values {
            KernelConfig::new(f).and_then(|c| c.with_ridge(self.ridge)).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn load(&self) -> Result<Dataset> {
        let ds = self.dataset.load()?;
        if self.unit_normalize {
            ds.unit_normalized()
        } else {
            Ok(ds)
        }
    }

    fn split(&self, ds: &Dataset, trial: usize) -> Result<Dataset> {
        subsample_split(ds, self.p_train, self.p_test, trial_seed(self.seed, trial as u64))
    }

    fn sorted_depths(&self) -> Vec<usize> {
        let mut d = self.depths.clone();
        d.sort_unstable();
        d.dedup();
        d
    }

    fn sorted_f(&self) -> Vec<f64> {
        let mut f = self.f_values.clone();
        f.sort_by(f64::total_cmp);
        f.dedup();
        f
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub f: f64,
    pub depth: usize,
    pub trial: usize,
    pub accuracy: f64,
    pub mse: f64,
    /// Effective dimensionality of the training Gram spectrum.
    pub ed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub f: f64,
    pub depth: usize,
    pub mean: [f64; 3],
    /// Sample standard deviation (zero for a single trial).
    pub std: [f64; 3],
}

fn gram_ed(k: &DMatrix<f64>) -> Result<f64> {
    let eig = sym_eigen(k)?;
    let mut eta: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    eta.reverse();
    effective_dim(&eta)
}

/// Walks the recursion once, calling `visit` at each requested depth; a failure
/// at some layer is reported for that depth and every deeper one.
fn for_each_depth<T>(
    mut g: GramPair,
    table: &LookupTable,
    sigma: f64,
    depths: &[usize],
    mut visit: impl FnMut(&GramPair) -> Result<T>,
) -> Vec<(usize, Result<T>)> {
    let mut out = Vec::with_capacity(depths.len());
    let mut layer = 0;
    for &d in depths {
        while layer < d {
            match propagate(&g, table, sigma) {
                Ok(next) => g = next,
                Err(e) => {
                    let msg = e.to_string();
                    out.extend(
                        depths.iter().filter(|&&dd| dd >= d).map(|&dd| (dd, Err(Error::Numerical(msg.clone())))),
                    );
                    return out;
                }
            }
            layer += 1;
        }
        out.push((d, visit(&g)));
    }
    out
}

/// KRR test accuracy, MSE and training-Gram ED over an f x L grid and several splits.
pub fn run_sweep(spec: &SweepSpec, cache: &TableCache) -> Result<(Vec<SweepRow>, Vec<CellSummary>)> {
    spec.validate()?;
    let ds = spec.load()?;
    let depths = spec.sorted_depths();
    let fs = spec.sorted_f();
    let splits: Vec<Dataset> = (0..spec.trials).map(|t| spec.split(&ds, t)).collect::<Result<_>>()?;
    let tables: Vec<_> = fs.iter().map(|&f| cache.get(f)).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..fs.len()).flat_map(|i| (0..spec.trials).map(move |t| (i, t))).collect();
    let mut rows: Vec<SweepRow> = jobs
        .par_iter()
        .flat_map_iter(|&(fi, trial)| {
            let f = fs[fi];
            let split = &splits[trial];
            let y_train = split.train_y();
            let y_test = split.test_y();
            let labels = split.test_labels();
            let nan_row = |depth| SweepRow { f, depth, trial, accuracy: f64::NAN, mse: f64::NAN, ed: f64::NAN };
            let config = match KernelConfig::new(f) {
                Ok(c) => c,
                Err(_) => return depths.iter().map(|&d| nan_row(d)).collect::<Vec<_>>(),
            };
            let g0 = match input_gram(&split.train_x(), &split.test_x()) {
                Ok(g) => g,
                Err(e) => {
                    log::warn!("f = {f}, trial {trial}: {e}");
                    return depths.iter().map(|&d| nan_row(d)).collect();
                }
            };
            let results = for_each_depth(g0, &tables[fi], config.sigma, &depths, |g| {
                let mu = krr_predict(g, &y_train, spec.ridge)?;
                let p = evaluate(&mu, &y_test, labels.as_deref())?;
                Ok((p.accuracy, p.mse, gram_ed(&g.k_train)?))
            });
            results
                .into_iter()
                .map(|(depth, r)| match r {
                    Ok((accuracy, mse, ed)) => SweepRow { f, depth, trial, accuracy, mse, ed },
                    Err(e) => {
                        log::warn!("f = {f}, L = {depth}, trial {trial}: {e}");
                        nan_row(depth)
                    }
                })
                .collect()
        })
        .collect();
    rows.sort_by(|a, b| a.f.total_cmp(&b.f).then(a.depth.cmp(&b.depth)).then(a.trial.cmp(&b.trial)));
    let summaries = rows
        .chunk_by(|a, b| a.f == b.f && a.depth == b.depth)
        .map(|cell| {
            let stat = |pick: fn(&SweepRow) -> f64| {
                let v: Vec<f64> = cell.iter().map(pick).collect();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = if v.len() > 1 {
                    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                (mean, std)
            };
            let cols = [stat(|r| r.accuracy), stat(|r| r.mse), stat(|r| r.ed)];
            CellSummary { f: cell[0].f, depth: cell[0].depth, mean: cols.map(|c| c.0), std: cols.map(|c| c.1) }
        })
        .collect();
    Ok((rows, summaries))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Trial rows followed by `mean` and `std` rows for each cell.
pub fn sweep_csv(rows: &[SweepRow], summaries: &[CellSummary]) -> String {
    let mut out = String::from("f,L,trial,accuracy,mse,ed\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{},{}", r.f, r.depth, r.trial, num(r.accuracy), num(r.mse), num(r.ed));
    }
    for s in summaries {
        for (tag, v) in [("mean", s.mean), ("std", s.std)] {
            let _ = writeln!(out, "{},{},{tag},{},{},{}", s.f, s.depth, num(v[0]), num(v[1]), num(v[2]));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRow {
    pub f: f64,
    pub depth: usize,
    /// Squared error summed over target columns, averaged over all `M` samples and trials.
    pub mse_experiment: f64,
    pub e_g_theory: f64,
}

/// Squared prediction error over every sample of `k_full` after fitting the `train` rows.
pub fn full_set_error(k_full: &DMatrix<f64>, y_full: &DMatrix<f64>, train: &[usize], ridge: f64) -> Result<f64> {
    let k_train = k_full.select_rows(train).select_columns(train);
    let w = krr_weights(&k_train, &y_full.select_rows(train), ridge)?;
    let mu = k_full.select_columns(train) * w;
    Ok((mu - y_full).norm_squared() / y_full.nrows() as f64)
}

/// Mean [`full_set_error`] over `splits`, and the learning-curve prediction
/// from the spectrum of `k_full` (`NaN` if the theory has no solution).
pub fn theory_cell(
    k_full: &DMatrix<f64>,
    y_full: &DMatrix<f64>,
    splits: &[Vec<usize>],
    p_train: usize,
    ridge: f64,
) -> Result<(f64, f64)> {
    let errs: Vec<f64> =
        splits.iter().map(|train| full_set_error(k_full, y_full, train, ridge)).collect::<Result<_>>()?;
    let mse = errs.iter().sum::<f64>() / errs.len() as f64;
    // predictions live in the Gram's column space, so target power outside it
    // is error for every split
    let theory = decompose(k_full, y_full)
        .and_then(|s| {
            let t = predict(&s.eta, &s.v_bar_sq_total(), p_train, ridge)?;
            Ok(t.e_g + s.residual_power)
        })
        .unwrap_or_else(|e| {
            log::warn!("theory: {e}");
            f64::NAN
        });
    Ok((mse, theory))
}

/// Learning-curve prediction against measured KRR error on the full sample set.
pub fn run_theory(spec: &SweepSpec, cache: &TableCache) -> Result<Vec<TheoryRow>> {
    spec.validate()?;
    let ds = spec.load()?;
    let depths = spec.sorted_depths();
    let fs = spec.sorted_f();
    let splits: Vec<Vec<usize>> =
        (0..spec.trials).map(|t| spec.split(&ds, t).map(|s| s.train_idx)).collect::<Result<_>>()?;
    let none = DMatrix::zeros(0, ds.x.ncols());
    let g0 = input_gram(&ds.x, &none)?;
    let cells: Vec<Vec<TheoryRow>> = fs
        .par_iter()
        .map(|&f| -> Result<Vec<TheoryRow>> {
            let table = cache.get(f)?;
            let config = KernelConfig::new(f)?;
            let results = for_each_depth(g0.clone(), &table, config.sigma, &depths, |g| {
                theory_cell(&g.k_train, &ds.y, &splits, spec.p_train, spec.ridge)
            });
            Ok(results
                .into_iter()
                .map(|(depth, r)| {
                    let (mse_experiment, e_g_theory) = r.unwrap_or_else(|e| {
                        log::warn!("f = {f}, L = {depth}: {e}");
                        (f64::NAN, f64::NAN)
                    });
                    TheoryRow { f, depth, mse_experiment, e_g_theory }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(cells.into_iter().flatten().collect())
}

pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut out = String::from("f,L,mse_experiment,e_g_theory\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.f, r.depth, num(r.mse_experiment), num(r.e_g_theory));
    }
    out
}

#[derive(Debug, Clone)]
pub struct VerifySpec {
    pub f_values: Vec<f64>,
    pub thetas: Vec<f64>,
    pub n_units: usize,
    pub trials: usize,
    pub seed: u64,
    /// Multiplies the analytic kernel before comparison; 1 for a genuine check.
    pub corruption: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyRow {
    pub f: f64,
    pub theta: f64,
    pub kernel: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub z: f64,
}

impl VerifyRow {
    pub fn passed(&self) -> bool {
        self.z.abs() <= VERIFY_Z_LIMIT
    }
}

/// Analytic single-layer kernel against a wide random network for unit inputs at angle `theta`.
pub fn run_verify(spec: &VerifySpec) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    for &f in &spec.f_values {
        let config = KernelConfig::new(f)?;
        for &theta in &spec.thetas {
            let a = [1.0, 0.0];
            let b = [theta.cos(), theta.sin()];
            let kernel = spec.corruption * kernel_single(&a, &b, &config)?;
            let seed = trial_seed(spec.seed, rows.len() as u64);
            let mc = mc_kernel_estimate(&a, &b, &config, spec.n_units, spec.trials, seed)?;
            rows.push(VerifyRow { f, theta, kernel, mc_mean: mc.mean, mc_stderr: mc.stderr, z: mc.z_score(kernel) });
        }
    }
    Ok(rows)
}

pub fn verify_csv(rows: &[VerifyRow]) -> String {
    let mut out = String::from("f,theta,kernel,mc_mean,mc_stderr,z,pass\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.f,
            num(r.theta),
            num(r.kernel),
            num(r.mc_mean),
            num(r.mc_stderr),
            num(r.z),
            r.passed()
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableReport {
    pub version: u32,
    pub f: f64,
    pub sigma: f64,
    pub grid_size: usize,
    pub max_error: f64,
}

impl std::fmt::Display for TableReport {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(out, "version    {}", self.version)?;
        writeln!(out, "f          {}", self.f)?;
        writeln!(out, "sigma      {}", self.sigma)?;
        writeln!(out, "grid_size  {}", self.grid_size)?;
        write!(out, "max_error  {:e}", self.max_error)
    }
}

/// Builds the table for `f` at its `sigma*` and writes it to `path`.
pub fn build_table(f: f64, grid_size: usize, path: impl AsRef<Path>) -> Result<LookupTable> {
    let table = build_lookup(f, grid_size, KernelConfig::new(f)?.sigma)?;
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    table.save(path)?;
    Ok(table)
}

/// Loads a table file and measures it against direct evaluation.
pub fn inspect_table(path: impl AsRef<Path>) -> Result<TableReport> {
    let table = LookupTable::load(path)?;
    Ok(TableReport {
        version: FORMAT_VERSION,
        f: table.f(),
        sigma: table.sigma(),
        grid_size: table.len(),
        max_error: table.max_interp_error(INSPECT_PROBES)?,
    })
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
