//! Datasets: the circulant toy task, IDX and CSV ingestion, seeded splits.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_CLASSES: usize = 10;
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `M x n` inputs, one sample per row.
    pub x: DMatrix<f64>,
    /// `M x k` targets.
    pub y: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
    /// Rows reserved for testing; never drawn into a training split.
    pub holdout: Vec<usize>,
}

impl Dataset {
    /// All rows start in the training split.
    pub fn new(x: DMatrix<f64>, y: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(Error::Dimension(format!("{} inputs but {} targets", x.nrows(), y.nrows())));
        }
        if let Some(l) = &labels {
            if l.len() != x.nrows() {
                return Err(Error::Dimension(format!("{} inputs but {} labels", x.nrows(), l.len())));
            }
        }
        if let Some(i) = x.iter().chain(y.iter()).position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite value at flat position {i}")));
        }
        let m = x.nrows();
        Ok(Dataset { x, y, labels, train_idx: (0..m).collect(), test_idx: Vec::new(), holdout: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn train_x(&self) -> DMatrix<f64> {
        self.x.select_rows(&self.train_idx)
    }

    pub fn test_x(&self) -> DMatrix<f64> {
        self.x.select_rows(&self.test_idx)
    }

    pub fn train_y(&self) -> DMatrix<f64> {
        self.y.select_rows(&self.train_idx)
    }

    pub fn test_y(&self) -> DMatrix<f64> {
        self.y.select_rows(&self.test_idx)
    }

    pub fn test_labels(&self) -> Option<Vec<usize>> {
        self.labels.as_ref().map(|l| self.test_idx.iter().map(|&i| l[i]).collect())
    }

    /// Appends `test` as a fixed test set kept out of every training split.
    pub fn with_holdout(self, test: Dataset) -> Result<Self> {
        if test.x.ncols() != self.x.ncols() || test.y.ncols() != self.y.ncols() {
            return Err(Error::Dimension(format!(
                "holdout shape {}x{} does not match {}x{}",
                test.x.ncols(),
                test.y.ncols(),
                self.x.ncols(),
                self.y.ncols()
            )));
        }
        let m = self.len();
        let labels = match (self.labels, test.labels) {
            (Some(mut a), Some(b)) => {
                a.extend(b);
                Some(a)
            }
            _ => None,
        };
        let stack = |a: DMatrix<f64>, b: DMatrix<f64>| {
            let mut out = a.resize_vertically(m + b.nrows(), 0.0);
            out.rows_mut(m, b.nrows()).copy_from(&b);
            out
        };
        let mut ds = Dataset::new(stack(self.x, test.x), stack(self.y, test.y), labels)?;
        ds.holdout = (m..ds.len()).collect();
        ds.train_idx = (0..m).collect();
        ds.test_idx = ds.holdout.clone();
        Ok(ds)
    }

    /// Rescales every input row to unit Euclidean norm.
    pub fn unit_normalized(mut self) -> Result<Self> {
        for (i, mut row) in self.x.row_iter_mut().enumerate() {
            let n = row.norm();
            if n == 0.0 {
                return Err(Error::Domain(format!("row {i} has zero norm")));
            }
            row /= n;
        }
        Ok(self)
    }
}

/// `M` points evenly spaced on the unit circle, with zero targets.
pub fn circulant_dataset(m_total: usize) -> Result<Dataset> {
    if m_total < 4 {
        return Err(Error::Config(format!("circulant data needs M >= 4, got {m_total}")));
    }
    let x = DMatrix::from_fn(m_total, 2, |p, j| {
        let a = 2.0 * PI * p as f64 / m_total as f64;
        if j == 0 {
            a.cos()
        } else {
            a.sin()
        }
    });
    Dataset::new(x, DMatrix::zeros(m_total, 1), None)
}

/// Alternating `+1`/`-1` blocks of length `M / n_blocks`.
pub fn square_wave_target(m_total: usize, n_blocks: usize) -> Result<Vec<f64>> {
    if n_blocks == 0 || n_blocks % 2 != 0 || m_total % n_blocks != 0 {
        return Err(Error::Config(format!("blocks must be even and divide M; got M = {m_total}, blocks = {n_blocks}")));
    }
    let len = m_total / n_blocks;
    Ok((0..m_total).map(|p| if (p / len) % 2 == 0 { 1.0 } else { -1.0 }).collect())
}

/// Circulant inputs paired with the square-wave target.
pub fn circulant_task(m_total: usize, n_blocks: usize) -> Result<Dataset> {
    let mut ds = circulant_dataset(m_total)?;
    ds.y = DMatrix::from_vec(m_total, 1, square_wave_target(m_total, n_blocks)?);
    Ok(ds)
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Domain(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(DMatrix::from_fn(labels.len(), classes, |i, j| if labels[i] == j { 1.0 } else { 0.0 }))
}

/// Two-class labels as a `{-1, +1}` column (class 0 maps to `-1`).
pub fn signed_labels(labels: &[usize]) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Domain(format!("signed labels need classes 0/1, got {bad}")));
    }
    Ok(DMatrix::from_fn(labels.len(), 1, |i, _| if labels[i] == 1 { 1.0 } else { -1.0 }))
}

fn read_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{}: truncated header", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Flattened IDX images scaled to `[0, 1]`.
pub fn read_idx_images(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let magic = read_u32(&bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("{}: bad image magic {magic:#010x}", path.display())));
    }
    let count = read_u32(&bytes, 4, path)? as usize;
    let rows = read_u32(&bytes, 8, path)? as usize;
    let cols = read_u32(&bytes, 12, path)? as usize;
    let pixels = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * pixels {
        return Err(Error::Format(format!(
            "{}: {} pixel bytes for {count} images of {rows}x{cols}",
            path.display(),
            body.len()
        )));
    }
    Ok(DMatrix::from_fn(count, pixels, |i, j| body[i * pixels + j] as f64 / 255.0))
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let bytes = read_file(path)?;
    let magic = read_u32(&bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("{}: bad label magic {magic:#010x}", path.display())));
    }
    let count = read_u32(&bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::Format(format!("{}: {} label bytes for {count} labels", path.display(), body.len())));
    }
    if let Some(&bad) = body.iter().find(|&&b| b as usize >= IDX_CLASSES) {
        return Err(Error::Format(format!("{}: label {bad} out of range", path.display())));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// IDX image/label pair with one-hot targets over ten classes.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let x = read_idx_images(&images)?;
    let l = read_idx_labels(&labels)?;
    if l.len() != x.nrows() {
        return Err(Error::Format(format!("{} images but {} labels", x.nrows(), l.len())));
    }
    let y = one_hot(&l, IDX_CLASSES)?;
    Dataset::new(x, y, Some(l))
}

pub fn write_idx_images(path: impl AsRef<Path>, pixels: &[u8], count: usize, rows: usize, cols: usize) -> Result<()> {
    if pixels.len() != count * rows * cols {
        return Err(Error::Dimension(format!("{} bytes for {count} images of {rows}x{cols}", pixels.len())));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

/// CSV with an integer label in the first column and features after it.
/// Targets are one-hot over `max label + 1` classes.
pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let bad = |field: &str| Error::Format(format!("{}: record {line}: bad field {field:?}", path.display()));
        let label = record.get(0).ok_or_else(|| bad(""))?;
        labels.push(label.trim().parse::<usize>().map_err(|_| bad(label))?);
        let n = record.len() - 1;
        if *width.get_or_insert(n) != n {
            return Err(Error::Format(format!(
                "{}: record {line} has {n} features, expected {}",
                path.display(),
                width.unwrap()
            )));
        }
        for field in record.iter().skip(1) {
            values.push(field.trim().parse::<f64>().map_err(|_| bad(field))?);
        }
    }
    let width = width.unwrap_or(0);
    let x = DMatrix::from_row_slice(labels.len(), width, &values);
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let y = one_hot(&labels, classes)?;
    Dataset::new(x, y, Some(labels))
}

/// Seeded split: `p_train` rows drawn from outside the holdout; the test set is
/// the holdout if there is one, else the remaining rows (optionally capped at `p_test`).
pub fn subsample_split(ds: &Dataset, p_train: usize, p_test: Option<usize>, seed: u64) -> Result<Dataset> {
    let mut reserved = vec![false; ds.len()];
    for &i in &ds.holdout {
        reserved[i] = true;
    }
    let mut pool: Vec<usize> = (0..ds.len()).filter(|&i| !reserved[i]).collect();
    if p_train > pool.len() {
        return Err(Error::Config(format!("requested {p_train} training samples from a pool of {}", pool.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let mut train = pool[..p_train].to_vec();
    let mut test = if ds.holdout.is_empty() { pool[p_train..].to_vec() } else { ds.holdout.clone() };
    if let Some(cap) = p_test {
        test.truncate(cap);
    }
    if test.is_empty() {
        log::warn!("split leaves no test samples");
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut out = ds.clone();
    out.train_idx = train;
    out.test_idx = test;
    Ok(out)
}

pub fn subsample(ds: &Dataset, p_train: usize, seed: u64) -> Result<Dataset> {
    subsample_split(ds, p_train, None, seed)
}

/// Luma of planar RGB rows (all red, then green, then blue).
pub fn to_grayscale(rgb_rows: &DMatrix<f64>, width: usize, height: usize) -> Result<DMatrix<f64>> {
    let pixels = width * height;
    if rgb_rows.ncols() != 3 * pixels {
        return Err(Error::Dimension(format!(
            "rows have {} values, expected 3 x {width} x {height}",
            rgb_rows.ncols()
        )));
    }
    Ok(DMatrix::from_fn(rgb_rows.nrows(), pixels, |i, j| {
        (0..3).map(|ch| LUMA[ch] * rgb_rows[(i, ch * pixels + j)]).sum()
    }))
}
