//! Dataset ingestion, chronological splitting, normalization, window
//! extraction, and synthetic series generation.
//!
//! CSV format: UTF-8, comma-separated, header row whose first column is
//! `date`, remaining columns numeric. Timestamps are carried as opaque
//! strings; chronological order is row order and is validated by requiring
//! the strings to be strictly increasing (ISO-8601 dates and zero-padded
//! counters both satisfy this lexicographically).

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

// ── series frame ──

/// An in-memory multivariate series: `N` rows of `C` named variables.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    pub timestamps: Vec<String>,
    /// Row-major `[N × C]` values; never part of an autodiff graph.
    pub values: Tensor<f64>,
    pub names: Vec<String>,
}

impl SeriesFrame {
    pub fn new(timestamps: Vec<String>, values: Tensor<f64>, names: Vec<String>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::InvalidArgument {
                op: "series_frame",
                msg: format!("values must be [N x C], got {:?}", values.shape()),
            });
        }
        let (n, c) = (values.shape()[0], values.shape()[1]);
        if timestamps.len() != n || names.len() != c {
            return Err(Error::InvalidArgument {
                op: "series_frame",
                msg: format!(
                    "{} timestamps and {} names for a {n} x {c} frame",
                    timestamps.len(),
                    names.len()
                ),
            });
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidArgument {
                    op: "series_frame",
                    msg: format!("timestamps not strictly increasing: {:?} then {:?}", w[0], w[1]),
                });
            }
        }
        Ok(Self { timestamps, values, names })
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of variables.
    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    /// Contiguous row range as a new frame.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        let (n, c) = (self.len(), self.width());
        if start + len > n {
            return Err(Error::InvalidArgument {
                op: "slice_rows",
                msg: format!("rows {start}..{} out of bounds for {n}", start + len),
            });
        }
        let data = self.values.data();
        let rows = data[start * c..(start + len) * c].to_vec();
        Self::new(
            self.timestamps[start..start + len].to_vec(),
            Tensor::from_vec(rows, &[len, c])?,
            self.names.clone(),
        )
    }
}

/// Joins single-timestamp-aligned frames side by side into one wider frame.
pub fn merge_columns(frames: &[SeriesFrame]) -> Result<SeriesFrame> {
    let first = frames.first().ok_or(Error::InvalidArgument {
        op: "merge_columns",
        msg: "no frames given".into(),
    })?;
    let n = first.len();
    let mut names = Vec::new();
    for f in frames {
        if f.len() != n || f.timestamps != first.timestamps {
            return Err(Error::InvalidArgument {
                op: "merge_columns",
                msg: "frames disagree on timestamps".into(),
            });
        }
        names.extend(f.names.iter().cloned());
    }
    let c: usize = frames.iter().map(SeriesFrame::width).sum();
    let mut data = Vec::with_capacity(n * c);
    let cols: Vec<Vec<f64>> = frames.iter().map(|f| f.values.data()).collect();
    for row in 0..n {
        for (f, col) in frames.iter().zip(&cols) {
            let w = f.width();
            data.extend_from_slice(&col[row * w..(row + 1) * w]);
        }
    }
    SeriesFrame::new(first.timestamps.clone(), Tensor::from_vec(data, &[n, c])?, names)
}

// ── csv ──

/// Parses an ETT-style CSV (header `date,var1,...`; numeric body).
pub fn load_csv(path: impl AsRef<Path>) -> Result<SeriesFrame> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

/// Parses CSV text; errors carry 1-based line numbers (header is line 1).
pub fn parse_csv(text: &str) -> Result<SeriesFrame> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Csv {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').collect();
    if cols.first() != Some(&"date") {
        return Err(Error::Csv {
            line: 1,
            msg: format!("first header column must be \"date\", got {:?}", cols.first().unwrap_or(&"")),
        });
    }
    if cols.len() < 2 {
        return Err(Error::Csv {
            line: 1,
            msg: "need at least one variable column".into(),
        });
    }
    let names: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let c = names.len();

    let mut timestamps = Vec::new();
    let mut data = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != c + 1 {
            return Err(Error::Csv {
                line,
                msg: format!("expected {} columns, got {}", c + 1, cells.len()),
            });
        }
        let ts = cells[0].to_string();
        if let Some(prev) = timestamps.last() {
            if &ts <= prev {
                return Err(Error::Csv {
                    line,
                    msg: format!("timestamp {ts:?} not after {prev:?}"),
                });
            }
        }
        timestamps.push(ts);
        for (j, cell) in cells[1..].iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Csv {
                line,
                msg: format!("column {:?}: not a number: {cell:?}", names[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Csv {
                    line,
                    msg: format!("column {:?}: non-finite value", names[j]),
                });
            }
            data.push(v);
        }
    }
    let n = timestamps.len();
    SeriesFrame::new(timestamps, Tensor::from_vec(data, &[n, c])?, names)
}

/// Renders a frame in the same CSV format `load_csv` reads.
pub fn to_csv(frame: &SeriesFrame) -> String {
    let mut out = String::from("date");
    for name in &frame.names {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    let data = frame.values.data();
    let c = frame.width();
    for (row, ts) in frame.timestamps.iter().enumerate() {
        out.push_str(ts);
        for v in &data[row * c..(row + 1) * c] {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Writes a frame to disk in the CSV format `load_csv` reads.
pub fn write_csv(frame: &SeriesFrame, path: impl AsRef<Path>) -> Result<()> {
    Ok(std::fs::write(path, to_csv(frame))?)
}

// ── chronological split ──

/// Integer split ratios applied chronologically (e.g. 6:2:2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl SplitSpec {
    pub fn new(train: u32, val: u32, test: u32) -> Result<Self> {
        if train + val + test == 0 {
            return Err(Error::InvalidArgument {
                op: "split_spec",
                msg: "ratios sum to zero".into(),
            });
        }
        Ok(Self { train, val, test })
    }
}

impl Default for SplitSpec {
    /// The 6:2:2 convention.
    fn default() -> Self {
        Self { train: 6, val: 2, test: 2 }
    }
}

/// Splits a frame into contiguous train/val/test segments; boundaries fall at
/// `floor(N * cum_ratio / total)`.
pub fn split_chrono(
    frame: &SeriesFrame,
    spec: SplitSpec,
) -> Result<(SeriesFrame, SeriesFrame, SeriesFrame)> {
    let n = frame.len();
    if n < 10 {
        return Err(Error::TooShort { needed: 10, got: n });
    }
    let total = (spec.train + spec.val + spec.test) as usize;
    let b1 = n * spec.train as usize / total;
    let b2 = n * (spec.train + spec.val) as usize / total;
    if b1 == 0 || b2 == b1 || b2 == n {
        return Err(Error::EmptySplit);
    }
    Ok((
        frame.slice_rows(0, b1)?,
        frame.slice_rows(b1, b2 - b1)?,
        frame.slice_rows(b2, n - b2)?,
    ))
}

// ── normalization ──

/// Per-variable z-score statistics, fit on the training split only.
/// Standard deviation is the population form (divide by N), the convention
/// used by the common benchmark loaders. Variable names travel with the
/// stats so downstream artifacts can validate their inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits mean and population std per variable; constant variables are
    /// rejected by name.
    pub fn fit(train: &SeriesFrame) -> Result<Self> {
        let (n, c) = (train.len(), train.width());
        if n == 0 {
            return Err(Error::EmptySplit);
        }
        let data = train.values.data();
        let mut mean = vec![0.0; c];
        for row in 0..n {
            for j in 0..c {
                mean[j] += data[row * c + j];
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; c];
        for row in 0..n {
            for j in 0..c {
                let d = data[row * c + j] - mean[j];
                var[j] += d * d;
            }
        }
        let mut std = vec![0.0; c];
        for j in 0..c {
            std[j] = (var[j] / n as f64).sqrt();
            if std[j] < 1e-12 {
                return Err(Error::ZeroStd { name: train.names[j].clone() });
            }
        }
        Ok(Self { names: train.names.clone(), mean, std })
    }

    fn check_width(&self, op: &'static str, c: usize) -> Result<()> {
        if self.mean.len() != c {
            return Err(Error::ShapeMismatch {
                op,
                lhs: vec![self.mean.len()],
                rhs: vec![c],
            });
        }
        Ok(())
    }

    /// z-scores a raw `[R × C]` tensor.
    pub fn apply(&self, values: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.map(values, "normalize", |v, m, s| (v - m) / s)
    }

    /// Inverts `apply` on a `[R × C]` tensor.
    pub fn invert(&self, values: &Tensor<f64>) -> Result<Tensor<f64>> {
        self.map(values, "denormalize", |v, m, s| v * s + m)
    }

    fn map(
        &self,
        values: &Tensor<f64>,
        op: &'static str,
        f: impl Fn(f64, f64, f64) -> f64,
    ) -> Result<Tensor<f64>> {
        if values.rank() != 2 {
            return Err(Error::InvalidArgument {
                op,
                msg: format!("expected [R x C], got {:?}", values.shape()),
            });
        }
        let c = values.shape()[1];
        self.check_width(op, c)?;
        let data = values.data();
        let out: Vec<f64> = data
            .iter()
            .enumerate()
            .map(|(i, &v)| f(v, self.mean[i % c], self.std[i % c]))
            .collect();
        Tensor::from_vec(out, &values.shape())
    }
}

fn check_names(frame: &SeriesFrame, stats: &NormStats) -> Result<()> {
    if frame.names != stats.names {
        return Err(Error::InvalidArgument {
            op: "normalize",
            msg: format!(
                "variable names {:?} do not match the fitted stats {:?}",
                frame.names, stats.names
            ),
        });
    }
    Ok(())
}

/// z-scores every variable of a frame; the frame's variable names must match
/// the ones the stats were fit on.
pub fn normalize(frame: &SeriesFrame, stats: &NormStats) -> Result<SeriesFrame> {
    check_names(frame, stats)?;
    SeriesFrame::new(
        frame.timestamps.clone(),
        stats.apply(&frame.values)?,
        frame.names.clone(),
    )
}

/// Inverts `normalize`.
pub fn denormalize(frame: &SeriesFrame, stats: &NormStats) -> Result<SeriesFrame> {
    check_names(frame, stats)?;
    SeriesFrame::new(
        frame.timestamps.clone(),
        stats.invert(&frame.values)?,
        frame.names.clone(),
    )
}

// ── windows ──

/// Extracts `(x: [L × C], y: [T × C])` pairs at offsets `0, stride, ...`;
/// `y` starts immediately after `x`. Yields `⌊(N − L − T) / stride⌋ + 1`
/// windows as fresh leaf tensors.
pub fn make_windows(
    frame: &SeriesFrame,
    l: usize,
    t: usize,
    stride: usize,
) -> Result<Vec<(Tensor<f64>, Tensor<f64>)>> {
    if l == 0 || t == 0 || stride == 0 {
        return Err(Error::InvalidArgument {
            op: "make_windows",
            msg: format!("l={l}, t={t}, stride={stride} must all be positive"),
        });
    }
    let (n, c) = (frame.len(), frame.width());
    if n < l + t {
        return Err(Error::TooShort { needed: l + t, got: n });
    }
    let data = frame.values.data();
    let count = (n - l - t) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for w in 0..count {
        let s = w * stride;
        let x = data[s * c..(s + l) * c].to_vec();
        let y = data[(s + l) * c..(s + l + t) * c].to_vec();
        out.push((Tensor::from_vec(x, &[l, c])?, Tensor::from_vec(y, &[t, c])?));
    }
    Ok(out)
}

// ── synthetic corpus ──

/// One sinusoidal component of a synthetic series.
#[derive(Debug, Clone, Copy)]
pub struct SynthComponent {
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl SynthComponent {
    pub fn new(period: f64, amplitude: f64, phase: f64) -> Self {
        Self { period, amplitude, phase }
    }
}

/// Generates a univariate frame: sum of sinusoids + linear trend + Gaussian
/// noise, deterministic given `seed`. The sinusoid angle is computed from
/// `t mod period`, so a noise-free single component repeats bit-exactly.
pub fn synth_series(
    n: usize,
    components: &[SynthComponent],
    trend_slope: f64,
    noise_std: f64,
    seed: u64,
) -> Result<SeriesFrame> {
    for comp in components {
        if !(comp.period >= 2.0) {
            return Err(Error::InvalidArgument {
                op: "synth_series",
                msg: format!("period {} < 2", comp.period),
            });
        }
    }
    if noise_std < 0.0 {
        return Err(Error::InvalidArgument {
            op: "synth_series",
            msg: format!("noise_std {noise_std} < 0"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).expect("finite std"))
    } else {
        None
    };
    let mut data = Vec::with_capacity(n);
    let mut timestamps = Vec::with_capacity(n);
    for t in 0..n {
        let mut v = trend_slope * t as f64;
        for comp in components {
            let frac = (t as f64).rem_euclid(comp.period) / comp.period;
            v += comp.amplitude * (std::f64::consts::TAU * frac + comp.phase).sin();
        }
        if let Some(dist) = &normal {
            v += dist.sample(&mut rng);
        }
        data.push(v);
        timestamps.push(format!("{t:010}"));
    }
    SeriesFrame::new(timestamps, Tensor::from_vec(data, &[n, 1])?, vec!["value".into()])
}

// ── metrics ──

fn metric(pred: &Tensor<f64>, truth: &Tensor<f64>, op: &'static str, f: impl Fn(f64) -> f64) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: pred.shape().to_vec(),
            rhs: truth.shape().to_vec(),
        });
    }
    let (p, t) = (pred.data(), truth.data());
    let sum: f64 = p.iter().zip(t.iter()).map(|(a, b)| f(a - b)).sum();
    Ok(sum / p.len() as f64)
}

/// Mean squared error over all entries.
pub fn mse(pred: &Tensor<f64>, truth: &Tensor<f64>) -> Result<f64> {
    metric(pred, truth, "mse", |d| d * d)
}

/// Mean absolute error over all entries.
pub fn mae(pred: &Tensor<f64>, truth: &Tensor<f64>) -> Result<f64> {
    metric(pred, truth, "mae", f64::abs)
}
