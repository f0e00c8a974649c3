//! Gaze-log ingestion and the velocity preprocessing pipeline.
//!
//! Stages: positions -> velocities (px/s) -> windowed means -> MinMax
//! scaling to `[0, 1]` -> `2^N`-level discretization -> fixed-length
//! sequences. Every stage is deterministic; only the synthetic generator
//! consumes randomness.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::generator::bin_center;

pub const DEFAULT_SAMPLE_RATE: f64 = 200.0;
pub const GAZE_HEADER: [&str; 5] = ["t", "x_left", "y_left", "x_right", "y_right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Eye {
    Left,
    Right,
}

impl std::str::FromStr for Eye {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Self::Left),
            "right" => Ok(Self::Right),
            other => Err(Error::config(format!("unknown eye `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeRecord {
    pub timestamp: f64,
    pub left: Option<(f64, f64)>,
    pub right: Option<(f64, f64)>,
}

impl GazeRecord {
    pub fn eye(&self, eye: Eye) -> Option<(f64, f64)> {
        match eye {
            Eye::Left => self.left,
            Eye::Right => self.right,
        }
    }
}

/// Reads a gaze CSV with header `t,x_left,y_left,x_right,y_right`. Empty
/// fields mark a missing sample; an eye counts as present only when both
/// of its coordinates are.
pub fn load_gaze_csv(path: &Path) -> Result<Vec<GazeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_gaze_csv(file)
}

pub fn read_gaze_csv<R: Read>(reader: R) -> Result<Vec<GazeRecord>> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Data("empty gaze file".into()));
    }
    let columns: Vec<&str> = headers.iter().collect();
    if columns != GAZE_HEADER {
        let missing: Vec<&str> = GAZE_HEADER
            .iter()
            .filter(|c| !columns.contains(c))
            .copied()
            .collect();
        return Err(Error::Schema(if missing.is_empty() {
            format!("header must be `{}`, got `{}`", GAZE_HEADER.join(","), columns.join(","))
        } else {
            format!("missing columns: {}", missing.join(", "))
        }));
    }

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<Option<f64>> {
            let raw = row.get(i).unwrap_or("");
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| Error::parse(line, format!("column `{}`: cannot parse `{raw}`", GAZE_HEADER[i])))
        };
        let timestamp = field(0)?.ok_or_else(|| Error::parse(line, "missing timestamp"))?;
        let pair = |a: Option<f64>, b: Option<f64>| a.zip(b);
        records.push(GazeRecord {
            timestamp,
            left: pair(field(1)?, field(2)?),
            right: pair(field(3)?, field(4)?),
        });
        if let [.., prev, cur] = records.as_slice() {
            if cur.timestamp < prev.timestamp {
                return Err(Error::parse(
                    line,
                    format!("timestamp {} precedes {}", cur.timestamp, prev.timestamp),
                ));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Data("gaze file has no records".into()));
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocitySeries {
    pub values: Vec<f64>,
    pub sample_rate: f64,
    pub scaled: bool,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl VelocitySeries {
    /// An unscaled series in px/s.
    pub fn raw(values: Vec<f64>, sample_rate: f64) -> Self {
        Self {
            values,
            sample_rate,
            scaled: false,
            scale_min: 0.0,
            scale_max: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Maps scaled values back to px/s.
    pub fn inverse_scale(&self) -> Result<Vec<f64>> {
        if !self.scaled {
            return Err(Error::Data("series is not scaled".into()));
        }
        let range = self.scale_max - self.scale_min;
        Ok(self.values.iter().map(|v| v * range + self.scale_min).collect())
    }
}

/// `|p_{i+1} - p_i| / dt` over consecutive samples where the eye is present.
/// Missing samples split the series; no velocity spans a gap.
pub fn compute_velocity(records: &[GazeRecord], eye: Eye, dt: f64) -> Result<VelocitySeries> {
    if !(dt > 0.0) {
        return Err(Error::config(format!("time step {dt} must be positive")));
    }
    let values: Vec<f64> = records
        .windows(2)
        .filter_map(|w| {
            let (a, b) = (w[0].eye(eye)?, w[1].eye(eye)?);
            Some((b.0 - a.0).hypot(b.1 - a.1) / dt)
        })
        .collect();
    if values.is_empty() {
        return Err(Error::Data(format!(
            "fewer than 2 consecutive usable {eye:?} samples"
        )));
    }
    Ok(VelocitySeries::raw(values, 1.0 / dt))
}

/// Non-overlapping window means over `interval * sample_rate` points; a
/// trailing partial window is averaged and kept.
pub fn resample_mean(series: &VelocitySeries, interval: f64) -> Result<VelocitySeries> {
    if !(interval > 0.0) {
        return Err(Error::config(format!("resample interval {interval} must be positive")));
    }
    let window = (interval * series.sample_rate).round().max(1.0) as usize;
    if window == 1 {
        return Ok(series.clone());
    }
    let values = series
        .values
        .chunks(window)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    Ok(VelocitySeries {
        values,
        sample_rate: series.sample_rate / window as f64,
        ..series.clone()
    })
}

/// Fitted MinMax parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Result<Self> {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if values.is_empty() || !(max > min) {
            return Err(Error::DegenerateData(
                "cannot MinMax-scale an empty or constant series".into(),
            ));
        }
        Ok(Self { min, max })
    }

    /// Scales with the fitted range, clamping to `[0, 1]`.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let range = self.max - self.min;
        values
            .iter()
            .map(|v| ((v - self.min) / range).clamp(0.0, 1.0))
            .collect()
    }
}

pub fn minmax_scale(series: &VelocitySeries) -> Result<VelocitySeries> {
    let fit = MinMax::fit(&series.values)?;
    Ok(scale_with(series, fit))
}

/// Applies an existing fit (e.g. from a training split) to `series`.
pub fn scale_with(series: &VelocitySeries, fit: MinMax) -> VelocitySeries {
    VelocitySeries {
        values: fit.apply(&series.values),
        sample_rate: series.sample_rate,
        scaled: true,
        scale_min: fit.min,
        scale_max: fit.max,
    }
}

/// Level indices in `[0, levels)` with centers `(i + 0.5) / levels`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteSeries {
    pub indices: Vec<usize>,
    pub levels: usize,
}

impl DiscreteSeries {
    pub fn new(indices: Vec<usize>, levels: usize) -> Result<Self> {
        if !levels.is_power_of_two() || levels < 2 {
            return Err(Error::config(format!("{levels} levels is not a power of two >= 2")));
        }
        if let Some(&i) = indices.iter().find(|&&i| i >= levels) {
            return Err(Error::Index { index: i, limit: levels });
        }
        Ok(Self { indices, levels })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.levels).map(|i| bin_center(i, self.levels)).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.indices.iter().map(|&i| bin_center(i, self.levels)).collect()
    }

    /// Empirical level frequencies.
    pub fn distribution(&self) -> Result<Vec<f64>> {
        if self.indices.is_empty() {
            return Err(Error::Data("empty discrete series".into()));
        }
        let mut counts = vec![0usize; self.levels];
        for &i in &self.indices {
            counts[i] += 1;
        }
        let n = self.indices.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / n).collect())
    }
}

/// `index = min(floor(x * levels), levels - 1)`.
pub fn discretize_value(x: f64, levels: usize) -> usize {
    ((x * levels as f64).floor().max(0.0) as usize).min(levels - 1)
}

pub fn discretize(series: &VelocitySeries, levels: usize) -> Result<DiscreteSeries> {
    if !series.scaled {
        return Err(Error::Data("discretize needs a MinMax-scaled series".into()));
    }
    DiscreteSeries::new(
        series.values.iter().map(|&x| discretize_value(x, levels)).collect(),
        levels,
    )
}

/// Windows `[i * stride, i * stride + length)`; the remainder is dropped.
pub fn make_sequences(values: &[f64], length: usize, stride: usize) -> Result<Vec<Vec<f64>>> {
    if length == 0 || stride == 0 {
        return Err(Error::config("sequence length and stride must be positive"));
    }
    if values.len() < length {
        return Err(Error::Data(format!(
            "series of {} points is shorter than sequence length {length}",
            values.len()
        )));
    }
    Ok((0..=(values.len() - length) / stride)
        .map(|i| values[i * stride..i * stride + length].to_vec())
        .collect())
}

/// Heavy-tailed positive test series: `exp(-3 + 1.2 z_t)` with AR(1)
/// driving noise `z_t = 0.7 z_{t-1} + sqrt(1 - 0.49) e_t` (unit stationary
/// variance), at 200 Hz.
pub fn synth_heavytail(n: usize, seed: u64) -> VelocitySeries {
    const MU: f64 = -3.0;
    const SIGMA: f64 = 1.2;
    const PHI: f64 = 0.7;
    let innovation = (1.0 - PHI * PHI).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: f64 = StandardNormal.sample(&mut rng);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        values.push((MU + SIGMA * z).exp());
        let e: f64 = StandardNormal.sample(&mut rng);
        z = PHI * z + innovation * e;
    }
    VelocitySeries::raw(values, DEFAULT_SAMPLE_RATE)
}

/// Writes `index,value` rows.
pub fn write_series_csv<W: Write>(mut out: W, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:.17e}")?;
    }
    Ok(())
}

/// Writes `index,level` rows.
pub fn write_discrete_csv<W: Write>(mut out: W, series: &DiscreteSeries) -> std::io::Result<()> {
    writeln!(out, "index,level")?;
    for (i, l) in series.indices.iter().enumerate() {
        writeln!(out, "{i},{l}")?;
    }
    Ok(())
}

/// Reads the second column of an `index,<name>` CSV as reals.
pub fn read_series_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::parse(n + 1, e.to_string()))?;
        if n == 0 {
            if !line.starts_with("index,") {
                return Err(Error::parse(1, format!("expected `index,...` header, got `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let value = line
            .split(',')
            .nth(1)
            .and_then(|v| v.trim().parse::<f64>().ok())
            .ok_or_else(|| Error::parse(n + 1, format!("malformed row `{line}`")))?;
        values.push(value);
    }
    Ok(values)
}

pub fn load_series_csv(path: &Path) -> Result<Vec<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series_csv(file)
}
