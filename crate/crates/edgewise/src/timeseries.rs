//! SCADA-style multichannel time series: CSV ingest, timestamp alignment,
//! iterative 3σ outlier removal, normalization, and training-row sampling.
//!
//! Rows with missing values are dropped, never interpolated — resampling two
//! channels onto a common grid invents data, so only records with common
//! timestamps survive [`align_common_timestamps`]. Timestamps are ISO 8601
//! UTC on disk and integer seconds since the Unix epoch in memory.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seconds since the Unix epoch, UTC.
pub type Timestamp = i64;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("unparseable timestamp `{0}` (expected ISO 8601, e.g. 2017-03-01T00:10:00Z)")]
    BadTimestamp(String),
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(String),
    #[error("no rows survived loading {path}")]
    EmptyDataset { path: PathBuf },
    #[error("datasets share no common timestamps")]
    EmptyIntersection,
    #[error("no datasets given")]
    NoDatasets,
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("channel `{0}` needs at least 2 distinct values")]
    DegenerateChannel(String),
    #[error("outlier removal emptied the dataset while processing channel `{0}`")]
    ChannelEmptied(String),
    #[error("channel `{0}` has zero standard deviation over the training selection")]
    ZeroVariance(String),
    #[error("training selection is empty")]
    EmptySelection,
    #[error("window holds {available} rows but {requested} were requested")]
    WindowTooSmall { requested: usize, available: usize },
    #[error("channel count/length mismatch: {0}")]
    Shape(String),
    #[error("timestamps are not strictly increasing at index {0}")]
    NonMonotonic(usize),
}

/// Parse an ISO 8601 instant. Accepts RFC 3339 (`2017-03-01T00:10:00Z`,
/// offsets allowed) and bare `YYYY-MM-DD HH:MM:SS` / `YYYY-MM-DDTHH:MM:SS`
/// forms, which are taken as UTC.
pub fn parse_timestamp(s: &str) -> Result<Timestamp, DataError> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(naive.and_utc().timestamp());
        }
    }
    Err(DataError::BadTimestamp(s.to_string()))
}

/// Render an instant as RFC 3339 UTC (`2017-03-01T00:10:00Z`).
pub fn format_timestamp(t: Timestamp) -> String {
    DateTime::<Utc>::from_timestamp(t, 0)
        .expect("timestamp in range")
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

/// Half-open interval `[start, end)` of instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl TimeWindow {
    pub fn new(start: Timestamp, end: Timestamp) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t < self.end
    }
}

/// Timestamped multichannel records of equal length, strictly increasing in
/// time, with no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    timestamps: Vec<Timestamp>,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl TimeSeriesDataset {
    /// Build a dataset, validating the struct invariants: equal lengths,
    /// strictly increasing timestamps, finite values.
    pub fn new(
        timestamps: Vec<Timestamp>,
        channels: Vec<(String, Vec<f64>)>,
    ) -> Result<Self, DataError> {
        let n = timestamps.len();
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(DataError::NonMonotonic(
                    timestamps.iter().position(|&t| t == w[1]).unwrap_or(0),
                ));
            }
        }
        let mut names = Vec::with_capacity(channels.len());
        let mut columns = Vec::with_capacity(channels.len());
        for (name, col) in channels {
            if col.len() != n {
                return Err(DataError::Shape(format!(
                    "channel `{name}` has {} values for {n} timestamps",
                    col.len()
                )));
            }
            if let Some(bad) = col.iter().position(|v| !v.is_finite()) {
                return Err(DataError::Shape(format!(
                    "channel `{name}` has a non-finite value at row {bad}"
                )));
            }
            names.push(name);
            columns.push(col);
        }
        Ok(Self {
            timestamps,
            names,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    pub fn channel_names(&self) -> &[String] {
        &self.names
    }

    pub fn channel(&self, name: &str) -> Result<&[f64], DataError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| DataError::UnknownChannel(name.to_string()))
    }

    /// Row indices whose timestamps fall inside `window`.
    pub fn rows_in_window(&self, window: TimeWindow) -> Vec<usize> {
        let start = self.timestamps.partition_point(|&t| t < window.start);
        let end = self.timestamps.partition_point(|&t| t < window.end);
        (start..end).collect()
    }

    /// New dataset keeping only the given (sorted, unique) row indices.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
        }
    }

    /// Write the dataset in the same CSV format [`load_csv`] reads:
    /// a `timestamp` column in RFC 3339 UTC followed by the channels in order.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io_err = |source| DataError::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        let mut header = String::from("timestamp");
        for name in &self.names {
            header.push(',');
            header.push_str(name);
        }
        writeln!(w, "{header}").map_err(io_err)?;
        for (i, &t) in self.timestamps.iter().enumerate() {
            let mut line = format_timestamp(t);
            for col in &self.columns {
                line.push(',');
                line.push_str(ryu_fmt(col[i]).as_str());
            }
            writeln!(w, "{line}").map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }
}

/// Shortest decimal representation that round-trips the f64 exactly.
fn ryu_fmt(v: f64) -> String {
    let mut buf = serde_json::to_string(&v).expect("finite f64");
    if !buf.contains(['.', 'e', 'E']) {
        buf.push_str(".0");
    }
    buf
}

/// What to do when the same timestamp occurs twice while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuplicatePolicy {
    KeepFirst,
    Error,
}

impl Default for DuplicatePolicy {
    fn default() -> Self {
        Self::KeepFirst
    }
}

/// Maps a logical channel name (`freq_a`) to the CSV column holding it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub column: String,
}

/// Row accounting from [`load_csv`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    /// Rows dropped because a selected channel was missing or unparseable.
    pub rows_dropped: usize,
    pub duplicates_dropped: usize,
}

/// Load a CSV with a header row, an ISO 8601 `timestamp_column`, and one
/// column per requested channel. Rows with a missing or unparseable value in
/// any selected channel are dropped and counted. Rows are sorted by timestamp;
/// duplicates are resolved per `duplicates`.
pub fn load_csv(
    path: &Path,
    timestamp_column: &str,
    channels: &[ChannelSpec],
    duplicates: DuplicatePolicy,
) -> Result<(TimeSeriesDataset, LoadReport), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|source| match source.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, source),
            },
            _ => DataError::Csv {
                path: path.to_path_buf(),
                source,
            },
        })?;

    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let col_index = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_idx = col_index(timestamp_column)?;
    let chan_idx: Vec<usize> = channels
        .iter()
        .map(|c| col_index(&c.column))
        .collect::<Result<_, _>>()?;

    let mut report = LoadReport::default();
    let mut rows: Vec<(Timestamp, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        report.rows_read += 1;
        let ts = match record.get(ts_idx).map(parse_timestamp) {
            Some(Ok(t)) => t,
            _ => {
                report.rows_dropped += 1;
                continue;
            }
        };
        let mut values = Vec::with_capacity(chan_idx.len());
        let mut ok = true;
        for &idx in &chan_idx {
            match record.get(idx).map(str::trim).filter(|s| !s.is_empty()) {
                Some(s) => match s.parse::<f64>() {
                    Ok(v) if v.is_finite() => values.push(v),
                    _ => {
                        ok = false;
                        break;
                    }
                },
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            report.rows_dropped += 1;
            continue;
        }
        rows.push((ts, values));
    }

    rows.sort_by_key(|(t, _)| *t);
    let mut timestamps = Vec::with_capacity(rows.len());
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows.len()); channels.len()];
    for (ts, values) in rows {
        if timestamps.last() == Some(&ts) {
            match duplicates {
                DuplicatePolicy::KeepFirst => {
                    report.duplicates_dropped += 1;
                    continue;
                }
                DuplicatePolicy::Error => {
                    return Err(DataError::DuplicateTimestamp(format_timestamp(ts)))
                }
            }
        }
        timestamps.push(ts);
        for (col, v) in columns.iter_mut().zip(values) {
            col.push(v);
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::EmptyDataset {
            path: path.to_path_buf(),
        });
    }

    let named = channels
        .iter()
        .map(|c| c.name.clone())
        .zip(columns)
        .collect();
    Ok((TimeSeriesDataset::new(timestamps, named)?, report))
}

/// Restrict every dataset to the timestamps they all share, preserving order.
/// No interpolation, ever: records without a counterpart are discarded.
pub fn align_common_timestamps(
    datasets: &[TimeSeriesDataset],
) -> Result<Vec<TimeSeriesDataset>, DataError> {
    if datasets.is_empty() {
        return Err(DataError::NoDatasets);
    }
    let mut common: HashSet<Timestamp> = datasets[0].timestamps.iter().copied().collect();
    for ds in &datasets[1..] {
        let here: HashSet<Timestamp> = ds.timestamps.iter().copied().collect();
        common.retain(|t| here.contains(t));
    }
    if common.is_empty() {
        return Err(DataError::EmptyIntersection);
    }
    Ok(datasets
        .iter()
        .map(|ds| {
            let rows: Vec<usize> = ds
                .timestamps
                .iter()
                .enumerate()
                .filter(|(_, t)| common.contains(t))
                .map(|(i, _)| i)
                .collect();
            ds.select_rows(&rows)
        })
        .collect())
}

/// Controls for [`remove_outliers`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// Points beyond this many standard deviations from the channel mean are
    /// removed each pass.
    pub sigma_multiplier: f64,
    /// Stop iterating on a channel once the drop in standard deviation
    /// between passes, measured on the channel's initial unit-variance scale,
    /// falls below this.
    pub sigma_delta_stop: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            sigma_multiplier: 3.0,
            sigma_delta_stop: 0.1,
        }
    }
}

/// Per-channel accounting from [`remove_outliers`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutlierChannelReport {
    pub channel: String,
    pub passes: usize,
    pub rows_removed: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutlierReport {
    pub channels: Vec<OutlierChannelReport>,
    pub rows_removed: usize,
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0, n);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt(), n)
}

/// Iteratively strip gross outliers channel by channel, in the declared
/// channel order. Each pass removes rows more than `sigma_multiplier` σ from
/// the channel mean and repeats until the σ drop between passes is below the
/// stopping threshold; removing a row for one channel removes it from every
/// channel before the next one is processed.
pub fn remove_outliers(
    dataset: &TimeSeriesDataset,
    channels: &[String],
    config: &OutlierConfig,
) -> Result<(TimeSeriesDataset, OutlierReport), DataError> {
    for name in channels {
        let col = dataset.channel(name)?;
        let first = col.first().copied();
        if col.len() < 2 || col.iter().all(|&v| Some(v) == first) {
            return Err(DataError::DegenerateChannel(name.clone()));
        }
    }

    let mut alive: Vec<usize> = (0..dataset.len()).collect();
    let mut report = OutlierReport::default();

    for name in channels {
        let col = dataset.channel(name)?;
        // Unit-variance reference scale for the stopping rule: a "0.1 drop"
        // is meaningless in raw units that could be Hz or megawatts.
        let (_, scale, _) = mean_and_std(alive.iter().map(|&r| col[r]));
        let scale = if scale > 0.0 { scale } else { 1.0 };

        let mut passes = 0usize;
        let mut removed_here = 0usize;
        let (_, mut sigma_prev, _) = mean_and_std(alive.iter().map(|&r| col[r]));
        loop {
            let (mean, sigma, n) = mean_and_std(alive.iter().map(|&r| col[r]));
            if n == 0 {
                return Err(DataError::ChannelEmptied(name.clone()));
            }
            let cut = config.sigma_multiplier * sigma;
            let before = alive.len();
            alive.retain(|&r| (col[r] - mean).abs() <= cut);
            if alive.is_empty() {
                return Err(DataError::ChannelEmptied(name.clone()));
            }
            passes += 1;
            removed_here += before - alive.len();

            let (_, sigma_next, _) = mean_and_std(alive.iter().map(|&r| col[r]));
            let delta = (sigma_prev - sigma_next) / scale;
            sigma_prev = sigma_next;
            if before == alive.len() || delta < config.sigma_delta_stop {
                break;
            }
        }
        report.channels.push(OutlierChannelReport {
            channel: name.clone(),
            passes,
            rows_removed: removed_here,
        });
        report.rows_removed += removed_here;
    }

    Ok((dataset.select_rows(&alive), report))
}

/// The rows used for GP training: where they came from and how they were drawn.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSelection {
    pub window: TimeWindow,
    /// Sorted, unique row indices into the cleaned dataset.
    pub indices: Vec<usize>,
    pub seed: u64,
}

/// Draw `n` unique rows uniformly without replacement from `window`.
/// Deterministic for a fixed seed.
pub fn sample_training(
    dataset: &TimeSeriesDataset,
    window: TimeWindow,
    n: usize,
    seed: u64,
) -> Result<TrainingSelection, DataError> {
    let candidates = dataset.rows_in_window(window);
    if candidates.len() < n {
        return Err(DataError::WindowTooSmall {
            requested: n,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, candidates.len(), n).into_vec();
    picks.sort_unstable();
    Ok(TrainingSelection {
        window,
        indices: picks.into_iter().map(|i| candidates[i]).collect(),
        seed,
    })
}

/// Per-channel mean and standard deviation of the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

/// Normalization statistics, one entry per channel, in channel order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub channels: Vec<(String, ChannelStats)>,
}

impl NormalizationStats {
    pub fn get(&self, name: &str) -> Option<&ChannelStats> {
        self.channels
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
    }
}

/// Mean and sample standard deviation (N−1 divisor) of each channel over the
/// selected training rows only.
pub fn compute_stats(
    dataset: &TimeSeriesDataset,
    selection: &TrainingSelection,
) -> Result<NormalizationStats, DataError> {
    if selection.indices.is_empty() {
        return Err(DataError::EmptySelection);
    }
    let mut channels = Vec::with_capacity(dataset.names.len());
    for (name, col) in dataset.names.iter().zip(&dataset.columns) {
        let (mean, std, _) = mean_and_std(selection.indices.iter().map(|&r| col[r]));
        if !(std > 0.0) {
            return Err(DataError::ZeroVariance(name.clone()));
        }
        channels.push((name.clone(), ChannelStats { mean, std }));
    }
    Ok(NormalizationStats { channels })
}

/// Map every value to `(x − μ) / σ` using the training statistics.
pub fn normalize(
    dataset: &TimeSeriesDataset,
    stats: &NormalizationStats,
) -> Result<TimeSeriesDataset, DataError> {
    transform(dataset, stats, |v, s| (v - s.mean) / s.std)
}

/// Inverse of [`normalize`]: `x = z·σ + μ`.
pub fn denormalize(
    dataset: &TimeSeriesDataset,
    stats: &NormalizationStats,
) -> Result<TimeSeriesDataset, DataError> {
    transform(dataset, stats, |v, s| v * s.std + s.mean)
}

fn transform(
    dataset: &TimeSeriesDataset,
    stats: &NormalizationStats,
    f: impl Fn(f64, &ChannelStats) -> f64,
) -> Result<TimeSeriesDataset, DataError> {
    let mut columns = Vec::with_capacity(dataset.columns.len());
    for (name, col) in dataset.names.iter().zip(&dataset.columns) {
        let s = stats
            .get(name)
            .ok_or_else(|| DataError::UnknownChannel(name.clone()))?;
        columns.push(col.iter().map(|&v| f(v, s)).collect());
    }
    Ok(TimeSeriesDataset {
        timestamps: dataset.timestamps.clone(),
        names: dataset.names.clone(),
        columns,
    })
}
