//! Univariate series loading, synthetic generation and sliding-window datasets.

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation of a univariate series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub timestamp: i64,
    pub value: f64,
    /// `Some(0)` normal, `Some(1)` anomaly, `None` unlabeled.
    pub label: Option<u8>,
}

/// Column layout accepted by [`load_series`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesSchema {
    /// `timestamp,value,is_anomaly`, the benchmark layout.
    Labeled,
    /// `timestamp,value`.
    Unlabeled,
    /// Decide from the column count of the first data row.
    #[default]
    Auto,
}

/// Reads a benchmark CSV file. A header row is optional; data rows are
/// numbered from 1 in error messages.
pub fn load_series(path: impl AsRef<Path>, schema: SeriesSchema) -> Result<Vec<SeriesPoint>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_series(&text, schema)
}

/// Parses CSV text in the layout described by [`load_series`].
pub fn parse_series(text: &str, schema: SeriesSchema) -> Result<Vec<SeriesPoint>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut points: Vec<SeriesPoint> = Vec::new();
    let mut data_line = 0usize;
    let mut schema = schema;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            line: data_line + 1,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        // Header detection: a first row whose first field is not numeric.
        if row_idx == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            let lower: Vec<String> = record.iter().map(|f| f.to_ascii_lowercase()).collect();
            if lower.first().map(String::as_str) != Some("timestamp") {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("unrecognized header `{}`", lower.join(",")),
                });
            }
            if schema == SeriesSchema::Auto {
                schema = if lower.len() >= 3 {
                    SeriesSchema::Labeled
                } else {
                    SeriesSchema::Unlabeled
                };
            }
            continue;
        }
        data_line += 1;
        if schema == SeriesSchema::Auto {
            schema = if record.len() >= 3 {
                SeriesSchema::Labeled
            } else {
                SeriesSchema::Unlabeled
            };
        }
        let expected = match schema {
            SeriesSchema::Labeled => 3,
            _ => 2,
        };
        if record.len() != expected {
            return Err(Error::Parse {
                line: data_line,
                message: format!("expected {expected} fields, found {}", record.len()),
            });
        }
        let bad = |what: &str, raw: &str| Error::Parse {
            line: data_line,
            message: format!("invalid {what} `{raw}`"),
        };
        let ts_raw = &record[0];
        let timestamp = ts_raw
            .parse::<i64>()
            .ok()
            .or_else(|| {
                ts_raw
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.fract() == 0.0 && v.is_finite())
                    .map(|v| v as i64)
            })
            .ok_or_else(|| bad("timestamp", ts_raw))?;
        let value = record[1]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad("value", &record[1]))?;
        let label = if expected == 3 {
            let raw = &record[2];
            match raw.parse::<f64>() {
                Ok(v) if v == 0.0 => Some(0),
                Ok(v) if v == 1.0 => Some(1),
                _ => return Err(bad("label", raw)),
            }
        } else {
            None
        };
        if let Some(prev) = points.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::Data(format!(
                    "timestamps not strictly increasing at line {data_line} ({} after {})",
                    timestamp, prev.timestamp
                )));
            }
        }
        points.push(SeriesPoint {
            timestamp,
            value,
            label,
        });
    }
    if points.is_empty() {
        return Err(Error::Data("no data rows".into()));
    }
    Ok(points)
}

/// Sinusoid plus Gaussian noise with `⌊length·anomaly_rate⌋` additive spikes.
///
/// Spike magnitudes are drawn from 5 to 8 baseline standard deviations with
/// a random sign.
pub fn generate_synthetic(length: usize, anomaly_rate: f64, seed: u64) -> Result<Vec<SeriesPoint>> {
    if !(anomaly_rate > 0.0 && anomaly_rate < 0.5) {
        return Err(Error::Argument(format!(
            "anomaly_rate must lie in (0, 0.5), got {anomaly_rate}"
        )));
    }
    if length < 100 {
        return Err(Error::Argument(format!(
            "synthetic length must be at least 100, got {length}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).expect("valid normal");
    let period = 50.0;
    let mut values: Vec<f64> = (0..length)
        .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin() + noise.sample(&mut rng))
        .collect();
    let (_, baseline_std) = mean_std(&values);

    let count = (length as f64 * anomaly_rate).floor() as usize;
    let mut labels = vec![0u8; length];
    let mut positions = sample(&mut rng, length, count).into_vec();
    positions.sort_unstable();
    for pos in positions {
        let magnitude = rng.random_range(5.0..8.0) * baseline_std;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        values[pos] += sign * magnitude;
        labels[pos] = 1;
    }
    Ok(values
        .into_iter()
        .zip(labels)
        .enumerate()
        .map(|(t, (value, label))| SeriesPoint {
            timestamp: t as i64 + 1,
            value,
            label: Some(label),
        })
        .collect())
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Standardization parameters of a source series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: f64,
    pub std: f64,
}

impl Scaling {
    fn fit(values: &[f64]) -> Result<Self> {
        let (mean, std) = mean_std(values);
        if !(std.is_finite() && std > f64::EPSILON * mean.abs().max(1.0)) {
            return Err(Error::Data("zero variance".into()));
        }
        Ok(Scaling { mean, std })
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Stride-1 sliding windows over a univariate series.
///
/// Window `i` ends at source point `first_point + i`; its label is the label
/// of that last point.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    n_steps: usize,
    raw: Vec<f64>,
    windows: Vec<f64>,
    labels: Option<Vec<u8>>,
    scaling: Option<Scaling>,
    first_point: usize,
}

/// Builds stride-1 windows; with `standardize`, values are z-scored with the
/// statistics of `points`.
pub fn make_windows(points: &[SeriesPoint], n_steps: usize, standardize: bool) -> Result<WindowDataset> {
    if n_steps == 0 {
        return Err(Error::Argument("n_steps must be positive".into()));
    }
    if points.len() < n_steps {
        return Err(Error::Data(format!(
            "series of length {} is shorter than n_steps = {n_steps}",
            points.len()
        )));
    }
    let raw: Vec<f64> = points.iter().map(|p| p.value).collect();
    let labels = if points.iter().all(|p| p.label.is_some()) {
        Some(points[n_steps - 1..].iter().map(|p| p.label.unwrap_or(0)).collect())
    } else {
        None
    };
    let scaling = if standardize {
        Some(Scaling::fit(&raw)?)
    } else {
        None
    };
    Ok(WindowDataset::build(raw, labels, n_steps, scaling, n_steps - 1))
}

impl WindowDataset {
    fn build(
        raw: Vec<f64>,
        labels: Option<Vec<u8>>,
        n_steps: usize,
        scaling: Option<Scaling>,
        first_point: usize,
    ) -> Self {
        let count = raw.len() + 1 - n_steps;
        let mut windows = Vec::with_capacity(count * n_steps);
        for start in 0..count {
            let slice = &raw[start..start + n_steps];
            match scaling {
                Some(s) => windows.extend(slice.iter().map(|&v| s.apply(v))),
                None => windows.extend_from_slice(slice),
            }
        }
        WindowDataset {
            n_steps,
            raw,
            windows,
            labels,
            scaling,
            first_point,
        }
    }

    pub fn len(&self) -> usize {
        self.windows.len() / self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.windows[i * self.n_steps..(i + 1) * self.n_steps]
    }

    pub fn windows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.windows.chunks_exact(self.n_steps)
    }

    /// Row-major `len() × n_steps` matrix of window values.
    pub fn matrix(&self) -> &[f64] {
        &self.windows
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn label(&self, i: usize) -> Option<u8> {
        self.labels.as_ref().map(|l| l[i])
    }

    pub fn scaling(&self) -> Option<Scaling> {
        self.scaling
    }

    /// Raw (unstandardized) values the windows were cut from.
    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    /// Index in the original series of the last point of window `i`.
    pub fn point_index(&self, i: usize) -> usize {
        self.first_point + i
    }

    /// Up to `3·n_steps` raw values around window `i`: two window lengths
    /// ending at its last point plus one window length after it.
    pub fn context(&self, i: usize) -> Vec<f64> {
        let last = i + self.n_steps - 1;
        let lo = (last + 1).saturating_sub(2 * self.n_steps);
        let hi = (last + 1 + self.n_steps).min(self.raw.len());
        self.raw[lo..hi].to_vec()
    }

    /// Chronological split; `⌊len·train_fraction⌋` windows go to the train
    /// side. Standardized datasets are re-scaled with train-side statistics.
    pub fn split(&self, train_fraction: f64) -> Result<(WindowDataset, WindowDataset)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "train_fraction must lie in (0, 1), got {train_fraction}"
            )));
        }
        let total = self.len();
        let n_train = (total as f64 * train_fraction).floor() as usize;
        if n_train == 0 || n_train == total {
            return Err(Error::Data(format!(
                "split of {total} windows at {train_fraction} leaves an empty side"
            )));
        }
        let n = self.n_steps;
        let train_raw = self.raw[..n_train + n - 1].to_vec();
        let val_raw = self.raw[n_train..].to_vec();
        let scaling = match self.scaling {
            Some(_) => Some(Scaling::fit(&train_raw)?),
            None => None,
        };
        let (train_labels, val_labels) = match &self.labels {
            Some(l) => (Some(l[..n_train].to_vec()), Some(l[n_train..].to_vec())),
            None => (None, None),
        };
        Ok((
            WindowDataset::build(train_raw, train_labels, n, scaling, self.first_point),
            WindowDataset::build(val_raw, val_labels, n, scaling, self.first_point + n_train),
        ))
    }

    /// Keeps only the windows at `indices` (in the given order). The result
    /// is a plain window collection: `raw` and `context` refer to the source.
    pub fn select(&self, indices: &[usize]) -> WindowDataset {
        let mut windows = Vec::with_capacity(indices.len() * self.n_steps);
        for &i in indices {
            windows.extend_from_slice(self.window(i));
        }
        WindowDataset {
            n_steps: self.n_steps,
            raw: self.raw.clone(),
            windows,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            scaling: self.scaling,
            first_point: self.first_point,
        }
    }

    /// Builds a dataset directly from window rows, for tests and tooling.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<u8>>) -> Result<WindowDataset> {
        let n_steps = rows.first().map(Vec::len).unwrap_or(0);
        if n_steps == 0 || rows.iter().any(|r| r.len() != n_steps) {
            return Err(Error::Shape("rows must be non-empty and equally sized".into()));
        }
        if labels.as_ref().is_some_and(|l| l.len() != rows.len()) {
            return Err(Error::Shape("label count differs from row count".into()));
        }
        Ok(WindowDataset {
            n_steps,
            raw: rows.iter().flatten().copied().collect(),
            windows: rows.iter().flatten().copied().collect(),
            labels,
            scaling: None,
            first_point: 0,
        })
    }
}
