//! Cached cosine maps for deep kernel composition.
//!
//! A [`LookupTable`] stores `c -> c'` for one sparsity level on a grid that is
//! uniform in the angle `theta = acos(c)`, so nodes cluster quadratically at
//! both `c = 1` and `c = -1`. The map is smooth in `theta` but behaves like
//! `(1 -+ c)^(3/2)` in `c` near the ends, so interpolation runs in the angle
//! variable: piecewise cubic Hermite with five-point derivative estimates and
//! a Fritsch–Carlson limiter to keep it monotone.
//!
//! # Cache file layout
//!
//! Little-endian: magic `b"SNGP"`, `u32` version, `f64` f, `f64` sigma,
//! `u32` grid length `n`, then `n` `f64` grid cosines and `n` `f64` mapped cosines.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{clamp_cosine, cosine_map, sigma_star, tau_from_f};

pub const MAGIC: [u8; 4] = *b"SNGP";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_GRID_SIZE: usize = 2049;
pub const MIN_GRID_SIZE: usize = 65;
/// Interpolation accuracy every built or loaded table must meet.
pub const MAX_INTERP_ERROR: f64 = 1e-6;

const HEADER_LEN: usize = 4 + 4 + 8 + 8 + 4;

#[derive(Debug, Clone)]
pub struct LookupTable {
    f: f64,
    tau: f64,
    sigma: f64,
    c_grid: Vec<f64>,
    c_out: Vec<f64>,
    // Interpolation state in ascending-angle order.
    theta: Vec<f64>,
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl LookupTable {
    /// Assembles a table from stored nodes, checking the monotonicity invariants.
    pub fn from_parts(f: f64, sigma: f64, c_grid: Vec<f64>, c_out: Vec<f64>) -> Result<Self> {
        let tau = tau_from_f(f).map_err(|e| Error::Format(format!("bad sparsity in table: {e}")))?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Format(format!("table sigma must be positive, got {sigma}")));
        }
        if c_grid.len() != c_out.len() {
            return Err(Error::Format(format!("grid has {} nodes but {} values", c_grid.len(), c_out.len())));
        }
        if c_grid.len() < 4 {
            return Err(Error::Format(format!("grid too short ({} nodes)", c_grid.len())));
        }
        if c_grid.iter().chain(&c_out).any(|v| !v.is_finite()) {
            return Err(Error::Format("table contains non-finite values".into()));
        }
        if c_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("grid cosines are not strictly increasing".into()));
        }
        if c_grid[0] != -1.0 || c_grid[c_grid.len() - 1] != 1.0 {
            return Err(Error::Format("grid must span exactly [-1, 1]".into()));
        }
        if c_out.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Format("mapped cosines are not non-decreasing".into()));
        }
        if c_out[0] < 0.0 {
            return Err(Error::Format("mapped cosines must be non-negative".into()));
        }

        let theta: Vec<f64> = c_grid.iter().rev().map(|c| c.acos()).collect();
        let value: Vec<f64> = c_out.iter().rev().copied().collect();
        let slope = monotone_slopes(&theta, &value);
        Ok(Self { f, tau, sigma, c_grid, c_out, theta, value, slope })
    }

    pub fn f(&self) -> f64 {
        self.f
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn c_grid(&self) -> &[f64] {
        &self.c_grid
    }

    pub fn c_out(&self) -> &[f64] {
        &self.c_out
    }

    pub fn len(&self) -> usize {
        self.c_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_grid.is_empty()
    }

    /// Interpolated map value at cosine `c` (clamped into `[-1, 1]`).
    pub fn eval(&self, c: f64) -> Result<f64> {
        let c = clamp_cosine(c)?;
        Ok(self.eval_angle(c.acos()))
    }

    /// Interpolated map value at angle `theta` in `[0, pi]`.
    pub fn eval_angle(&self, theta: f64) -> f64 {
        let n = self.theta.len();
        // first node strictly greater than theta
        let k = self.theta.partition_point(|&t| t <= theta);
        if k == 0 {
            return self.value[0];
        }
        if k >= n {
            return self.value[n - 1];
        }
        let i = k - 1;
        let h = self.theta[k] - self.theta[i];
        let t = (theta - self.theta[i]) / h;
        if t == 0.0 {
            return self.value[i];
        }
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.value[i] + h10 * h * self.slope[i] + h01 * self.value[k] + h11 * h * self.slope[k]
    }

    /// Largest absolute deviation from direct evaluation over `probes` points
    /// spread uniformly in angle, plus every interval midpoint.
    pub fn max_interp_error(&self, probes: usize) -> Result<f64> {
        let mut angles: Vec<f64> = self.theta.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        if probes > 1 {
            angles.extend((0..probes).map(|i| PI * i as f64 / (probes - 1) as f64));
        }
        let errs: Result<Vec<f64>> = angles
            .par_iter()
            .map(|&th| {
                let direct = cosine_map(th.cos(), self.tau, self.sigma)?;
                Ok((self.eval_angle(th) - direct).abs())
            })
            .collect();
        Ok(errs?.into_iter().fold(0.0, f64::max))
    }

    /// Serializes the table in the cache-file layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.c_grid.len();
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * n);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.f.to_le_bytes());
        out.extend_from_slice(&self.sigma.to_le_bytes());
        out.extend_from_slice(&(n as u32).to_le_bytes());
        for v in self.c_grid.iter().chain(&self.c_out) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses and validates a cache file image.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!("truncated header: {} bytes, need {HEADER_LEN}", bytes.len())));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", &bytes[0..4])));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}, expected {FORMAT_VERSION}")));
        }
        let f = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let sigma = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let n = u32::from_le_bytes(bytes[24..28].try_into().unwrap()) as usize;
        let expected = HEADER_LEN + 16 * n;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "length mismatch: header declares {n} nodes ({expected} bytes), file has {} bytes",
                bytes.len()
            )));
        }
        let read = |offset: usize| -> Vec<f64> {
            bytes[offset..offset + 8 * n].chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()
        };
        let c_grid = read(HEADER_LEN);
        let c_out = read(HEADER_LEN + 8 * n);
        Self::from_parts(f, sigma, c_grid, c_out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Builds the table for sparsity `f` and weight scale `sigma` on `grid_size` nodes.
///
/// Fails with a configuration error when the grid cannot reach [`MAX_INTERP_ERROR`].
pub fn build_lookup(f: f64, grid_size: usize, sigma: f64) -> Result<LookupTable> {
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::Config(format!("grid size {grid_size} is below the minimum of {MIN_GRID_SIZE}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    let tau = tau_from_f(f)?;
    let last = (grid_size - 1) as f64;
    let c_grid: Vec<f64> = (0..grid_size)
        .map(|i| {
            if i == 0 {
                -1.0
            } else if i == grid_size - 1 {
                1.0
            } else {
                (PI * (1.0 - i as f64 / last)).cos()
            }
        })
        .collect();
    let raw: Result<Vec<f64>> = c_grid.par_iter().map(|&c| cosine_map(c, tau, sigma)).collect();
    let mut c_out = raw?;
    // Quadrature noise in the flat tail near c = -1 sits at the 1e-16 level;
    // anything larger is a real defect.
    let mut running = 0.0_f64;
    for v in c_out.iter_mut() {
        if *v < running {
            if running - *v > 1e-13 {
                return Err(Error::Numerical(format!(
                    "cosine map decreased by {:e} while building table",
                    running - *v
                )));
            }
            *v = running;
        }
        running = *v;
    }
    let table = LookupTable::from_parts(f, sigma, c_grid, c_out)?;
    let err = table.max_interp_error(0)?;
    if err > MAX_INTERP_ERROR {
        return Err(Error::Config(format!(
            "grid of {grid_size} nodes gives interpolation error {err:e} > {MAX_INTERP_ERROR:e}"
        )));
    }
    Ok(table)
}

/// Memo of `sigma*`-normalized tables keyed by sparsity, optionally persisted
/// to a directory of cache files.
#[derive(Debug)]
pub struct TableCache {
    dir: Option<PathBuf>,
    grid_size: usize,
    tables: Mutex<HashMap<u64, Arc<LookupTable>>>,
}

impl TableCache {
    pub fn new(grid_size: usize) -> Self {
        Self { dir: None, grid_size, tables: Mutex::new(HashMap::new()) }
    }

    /// A cache that reads and writes table files under `dir`.
    pub fn with_dir(dir: impl Into<PathBuf>, grid_size: usize) -> Self {
        Self { dir: Some(dir.into()), ..Self::new(grid_size) }
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Cache file name for sparsity `f` on `grid_size` nodes.
    pub fn file_name(f: f64, grid_size: usize) -> String {
        format!("table_{f}_{grid_size}.sngp")
    }

    /// The table for `f` at `sigma*`, built at most once per cache.
    pub fn get(&self, f: f64) -> Result<Arc<LookupTable>> {
        let key = f.to_bits();
        if let Some(t) = self.tables.lock().unwrap().get(&key) {
            return Ok(Arc::clone(t));
        }
        let sigma = sigma_star(tau_from_f(f)?)?;
        let table = Arc::new(self.load_or_build(f, sigma)?);
        let mut tables = self.tables.lock().unwrap();
        Ok(Arc::clone(tables.entry(key).or_insert(table)))
    }

    fn load_or_build(&self, f: f64, sigma: f64) -> Result<LookupTable> {
        let Some(dir) = &self.dir else {
            return build_lookup(f, self.grid_size, sigma);
        };
        let path = dir.join(Self::file_name(f, self.grid_size));
        if path.exists() {
            match LookupTable::load(&path) {
                Ok(t) if t.f() == f && t.sigma() == sigma && t.len() == self.grid_size => {
                    log::debug!("loaded table {}", path.display());
                    return Ok(t);
                }
                Ok(_) => log::warn!("{} does not match f = {f}; rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unusable table {}: {e}", path.display()),
            }
        }
        let t = build_lookup(f, self.grid_size, sigma)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        t.save(&path)?;
        log::info!("wrote table {}", path.display());
        Ok(t)
    }
}

/// Process-wide in-memory cache at the default grid size.
pub fn shared_tables() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| TableCache::new(DEFAULT_GRID_SIZE))
}

/// Node derivatives of the interpolant, from five-point Lagrange estimates
/// followed by the Fritsch–Carlson monotonicity limiter.
fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let width = 5.min(n);
    let mut d: Vec<f64> = (0..n)
        .map(|k| {
            let start = k.saturating_sub(width / 2).min(n - width);
            lagrange_derivative(&x[start..start + width], &y[start..start + width], k - start)
        })
        .collect();
    let secants: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    for (i, &s) in secants.iter().enumerate() {
        if s == 0.0 {
            d[i] = 0.0;
            d[i + 1] = 0.0;
            continue;
        }
        if d[i] * s < 0.0 {
            d[i] = 0.0;
        }
        if d[i + 1] * s < 0.0 {
            d[i + 1] = 0.0;
        }
        let a = d[i] / s;
        let b = d[i + 1] / s;
        let r = a * a + b * b;
        if r > 9.0 {
            let t = 3.0 / r.sqrt();
            d[i] = t * a * s;
            d[i + 1] = t * b * s;
        }
    }
    d
}

/// Derivative at `x[k]` of the interpolating polynomial through all of `(x, y)`.
fn lagrange_derivative(x: &[f64], y: &[f64], k: usize) -> f64 {
    let xk = x[k];
    let mut total = 0.0;
    for j in 0..x.len() {
        let weight = if j == k {
            (0..x.len()).filter(|&m| m != k).map(|m| 1.0 / (xk - x[m])).sum::<f64>()
        } else {
            let mut w = 1.0 / (x[j] - xk);
            for m in 0..x.len() {
                if m != j && m != k {
                    w *= (xk - x[m]) / (x[j] - x[m]);
                }
            }
            w
        };
        total += weight * y[j];
    }
    total
}
