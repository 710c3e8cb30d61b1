//! Synthetic Blobs generators, CSV ingestion and train/test splitting.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, WitsError};
use crate::sample::Sample;
use crate::witness::SplitRatio;

/// Two samples of equal dimension plus a description of where they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoSample {
    pub x: Sample,
    pub y: Sample,
    pub descriptor: String,
}

impl TwoSample {
    pub fn new(x: Sample, y: Sample, descriptor: impl Into<String>) -> Result<Self> {
        x.check_dim(&y)?;
        Ok(Self {
            x,
            y,
            descriptor: descriptor.into(),
        })
    }
}

/// A per-class train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub x_train: Sample,
    pub y_train: Sample,
    pub x_test: Sample,
    pub y_test: Sample,
    pub ratio: SplitRatio,
    pub x_train_idx: Vec<usize>,
    pub x_test_idx: Vec<usize>,
    pub y_train_idx: Vec<usize>,
    pub y_test_idx: Vec<usize>,
}

/// Blob centers: the grid `{0, 1, 2}²`.
pub const BLOB_CENTERS: [[f64; 2]; 9] = [
    [0.0, 0.0],
    [0.0, 1.0],
    [0.0, 2.0],
    [1.0, 0.0],
    [1.0, 1.0],
    [1.0, 2.0],
    [2.0, 0.0],
    [2.0, 1.0],
    [2.0, 2.0],
];

/// Eigenvalues of the shared rotated-blobs covariance `C = diag(0.03, 0.01)`.
pub const ROTATED_EIGENVALUES: [f64; 2] = [0.03, 0.01];

/// Isotropic variance of every P blob in the Liu variant.
pub const LIU_P_VARIANCE: f64 = 0.03;

/// Q blobs of the Liu variant: `(major variance, minor variance, angle)` per
/// center, in the order of [`BLOB_CENTERS`].
pub const LIU_Q_BLOBS: [(f64, f64, f64); 9] = [
    (0.090, 0.010, 0.35),
    (0.070, 0.015, 1.20),
    (0.080, 0.020, 2.45),
    (0.060, 0.010, 0.80),
    (0.090, 0.030, 1.90),
    (0.050, 0.012, 2.90),
    (0.085, 0.018, 0.10),
    (0.075, 0.025, 1.55),
    (0.065, 0.010, 2.20),
];

/// Square root `R(θ) diag(√a, √b)` of the covariance `R(θ) diag(a, b) R(θ)ᵀ`.
#[derive(Debug, Clone, Copy)]
struct Blob {
    root: [[f64; 2]; 2],
}

impl Blob {
    fn new(major: f64, minor: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let (a, b) = (major.sqrt(), minor.sqrt());
        Self {
            root: [[c * a, -s * b], [s * a, c * b]],
        }
    }

    fn draw(&self, center: &[f64; 2], rng: &mut ChaCha8Rng) -> [f64; 2] {
        let u: f64 = StandardNormal.sample(rng);
        let v: f64 = StandardNormal.sample(rng);
        [
            center[0] + self.root[0][0] * u + self.root[0][1] * v,
            center[1] + self.root[1][0] * u + self.root[1][1] * v,
        ]
    }

    /// `R diag(a, b) Rᵀ`.
    fn covariance(&self) -> [[f64; 2]; 2] {
        let r = &self.root;
        [
            [r[0][0] * r[0][0] + r[0][1] * r[0][1], r[0][0] * r[1][0] + r[0][1] * r[1][1]],
            [r[1][0] * r[0][0] + r[1][1] * r[0][1], r[1][0] * r[1][0] + r[1][1] * r[1][1]],
        ]
    }
}

fn draw_mixture(count: usize, blobs: &[Blob; 9], rng: &mut ChaCha8Rng) -> Sample {
    draw_mixture_labeled(count, blobs, rng).0
}

/// Mixture draws together with the component of each point.
fn draw_mixture_labeled(count: usize, blobs: &[Blob; 9], rng: &mut ChaCha8Rng) -> (Sample, Vec<usize>) {
    let mut data = Vec::with_capacity(2 * count);
    let mut components = Vec::with_capacity(count);
    for _ in 0..count {
        let c = rng.random_range(0..9);
        data.extend_from_slice(&blobs[c].draw(&BLOB_CENTERS[c], rng));
        components.push(c);
    }
    (Sample::new(2, data).expect("two coordinates per point"), components)
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(WitsError::param("n, m", "both sample sizes must be at least 1"));
    }
    Ok(())
}

/// Nine-blob mixture where Q's shared covariance is P's rotated by `theta`.
pub fn blobs_rotated(n: usize, m: usize, theta: f64, seed: u64) -> Result<TwoSample> {
    check_sizes(n, m)?;
    if !theta.is_finite() {
        return Err(WitsError::param("theta", "must be finite"));
    }
    let [a, b] = ROTATED_EIGENVALUES;
    let p = [Blob::new(a, b, 0.0); 9];
    let q = [Blob::new(a, b, theta); 9];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = draw_mixture(n, &p, &mut rng);
    let y = draw_mixture(m, &q, &mut rng);
    TwoSample::new(x, y, format!("blobs_rotated(theta={theta})"))
}

fn liu_p() -> [Blob; 9] {
    [Blob::new(LIU_P_VARIANCE, LIU_P_VARIANCE, 0.0); 9]
}

fn liu_q() -> [Blob; 9] {
    LIU_Q_BLOBS.map(|(a, b, angle)| Blob::new(a, b, angle))
}

/// Isotropic P blobs against per-blob anisotropic Q blobs.
pub fn blobs_liu(n: usize, m: usize, seed: u64) -> Result<TwoSample> {
    check_sizes(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = draw_mixture(n, &liu_p(), &mut rng);
    let y = draw_mixture(m, &liu_q(), &mut rng);
    TwoSample::new(x, y, "blobs_liu")
}

/// Null version of [`blobs_liu`]: both samples drawn from P.
pub fn blobs_liu_null(n: usize, m: usize, seed: u64) -> Result<TwoSample> {
    check_sizes(n, m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = draw_mixture(n, &liu_p(), &mut rng);
    let y = draw_mixture(m, &liu_p(), &mut rng);
    TwoSample::new(x, y, "blobs_liu(null)")
}

/// Covariance of Q's blob `i` in the Liu variant.
pub fn liu_q_covariance(i: usize) -> [[f64; 2]; 2] {
    liu_q()[i].covariance()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvOptions {
    /// 0-based column indices to keep; all columns when `None`.
    pub columns: Option<Vec<usize>>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            columns: None,
            delimiter: b',',
        }
    }
}

/// Reads a headed CSV file of reals into a sample, one point per row.
pub fn load_csv(path: &Path, options: &CsvOptions) -> Result<Sample> {
    let file = std::fs::File::open(path).map_err(|source| WitsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(options.delimiter)
        .from_reader(file);
    let parse_err = |row: usize, column: usize, reason: String| WitsError::Parse {
        path: path.to_path_buf(),
        row,
        column,
        reason,
    };
    let width = reader
        .headers()
        .map_err(|e| parse_err(1, 0, e.to_string()))?
        .len();
    let columns: Vec<usize> = match &options.columns {
        Some(c) => c.clone(),
        None => (0..width).collect(),
    };
    if columns.is_empty() {
        return Err(WitsError::param("columns", "no columns selected"));
    }
    if let Some(&bad) = columns.iter().find(|&&c| c >= width) {
        return Err(parse_err(1, bad, format!("header has only {width} columns")));
    }
    let mut data = Vec::new();
    for (i, record) in reader.records().enumerate() {
        // Row numbers are 1-based file lines; the header is line 1.
        let row = i + 2;
        let record = record.map_err(|e| {
            let line = e.position().map_or(row, |p| p.line() as usize);
            parse_err(line, 0, e.to_string())
        })?;
        for &c in &columns {
            let cell = record.get(c).ok_or_else(|| parse_err(row, c, "missing cell".into()))?;
            let value: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(row, c, format!("`{cell}` is not a number")))?;
            data.push(value);
        }
    }
    if data.is_empty() {
        return Err(WitsError::EmptySample("CSV file has no data rows"));
    }
    Sample::new(columns.len(), data)
}

/// Writes a sample as CSV with a header of `x0, x1, …`. Values use the
/// shortest representation that parses back to the same bits.
pub fn write_csv(path: &Path, sample: &Sample) -> Result<()> {
    let io_err = |e: csv::Error| WitsError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    };
    let mut writer = csv::Writer::from_path(path).map_err(io_err)?;
    let header: Vec<String> = (0..sample.dim()).map(|j| format!("x{j}")).collect();
    writer.write_record(&header).map_err(io_err)?;
    for p in sample.iter() {
        writer
            .write_record(p.iter().map(|v| v.to_string()))
            .map_err(io_err)?;
    }
    writer.flush().map_err(|source| WitsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Uniform subset of `size` points in random order.
pub fn subsample_without_replacement(s: &Sample, size: usize, seed: u64) -> Result<Sample> {
    if size > s.len() {
        return Err(WitsError::param(
            "size",
            format!("cannot draw {size} points from {} without replacement", s.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(s.select(&index::sample(&mut rng, s.len(), size).into_vec()))
}

fn split_indices(len: usize, ratio: SplitRatio, rng: &mut ChaCha8Rng, what: &'static str) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_train = ratio.train_size(len);
    if n_train == 0 || n_train >= len {
        return Err(WitsError::param(
            "r",
            format!("splitting {len} {what} points at r = {} leaves an empty part", ratio.value()),
        ));
    }
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Random per-class split with `⌈r·n⌉` training points.
pub fn split(ts: &TwoSample, ratio: SplitRatio, seed: u64) -> Result<SplitData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x_train_idx, x_test_idx) = split_indices(ts.x.len(), ratio, &mut rng, "X")?;
    let (y_train_idx, y_test_idx) = split_indices(ts.y.len(), ratio, &mut rng, "Y")?;
    Ok(SplitData {
        x_train: ts.x.select(&x_train_idx),
        y_train: ts.y.select(&y_train_idx),
        x_test: ts.x.select(&x_test_idx),
        y_test: ts.y.select(&y_test_idx),
        ratio,
        x_train_idx,
        x_test_idx,
        y_train_idx,
        y_test_idx,
    })
}

/// `θ = π/4`, the rotation used for the alternative.
pub const ALTERNATIVE_THETA: f64 = PI / 4.0;
