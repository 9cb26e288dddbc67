//! Residual diagnostics: X-bar control charts over prediction residuals with
//! robust 3σ thresholds.
//!
//! Residuals `re = f̄ − f*` (predicted minus actual, normalized units) are
//! averaged over fixed calendar windows. Thresholds come from a calibration
//! window shortly after training: repeated random subsets of its residuals
//! give per-subset means and standard deviations whose averages μ̄, σ̄ define
//! `thr = μ̄ ± 3σ̄`. Window *means* are compared against the subgroup-scaled
//! limits μ̄ ± 3σ̄/√n (n = nominal samples per window), the standard X-bar
//! reduction of per-point spread to mean spread.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::Prediction;
use crate::timeseries::{format_timestamp, TimeWindow, Timestamp};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("prediction has {0} values but actual series has {1}")]
    LengthMismatch(usize, usize),
    #[error("residual series is empty")]
    EmptySeries,
    #[error("non-finite residual at index {0}")]
    NonFinite(usize),
    #[error("threshold window holds {got} residuals, need at least {need}")]
    WindowTooSmall { need: usize, got: usize },
    #[error("chart window must be positive, got {0} days")]
    BadWindow(f64),
    #[error("writing chart CSV {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// The three pairwise GPs. The residual of a pair is attributed to the blade
/// it predicts: AB predicts B, BC predicts C, CA predicts A.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BladePair {
    AB,
    BC,
    CA,
}

impl BladePair {
    pub const ALL: [BladePair; 3] = [BladePair::AB, BladePair::BC, BladePair::CA];

    pub fn label(&self) -> &'static str {
        match self {
            BladePair::AB => "AB",
            BladePair::BC => "BC",
            BladePair::CA => "CA",
        }
    }

    /// Blade whose frequency feeds the GP input.
    pub fn input_blade(&self) -> char {
        match self {
            BladePair::AB => 'A',
            BladePair::BC => 'B',
            BladePair::CA => 'C',
        }
    }

    /// Blade whose frequency the GP predicts; residuals belong to it.
    pub fn predicted_blade(&self) -> char {
        match self {
            BladePair::AB => 'B',
            BladePair::BC => 'C',
            BladePair::CA => 'A',
        }
    }
}

impl std::fmt::Display for BladePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Timestamped residual errors for one blade pair, in normalized units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub pair: BladePair,
    pub timestamps: Vec<Timestamp>,
    pub values: Vec<f64>,
}

/// `re = f̄ − f*`, elementwise.
pub fn residuals(
    predicted: &Prediction,
    actual: &[f64],
    timestamps: &[Timestamp],
    pair: BladePair,
) -> Result<ResidualSeries, MonitorError> {
    if predicted.mean.len() != actual.len() {
        return Err(MonitorError::LengthMismatch(
            predicted.mean.len(),
            actual.len(),
        ));
    }
    if timestamps.len() != actual.len() {
        return Err(MonitorError::LengthMismatch(timestamps.len(), actual.len()));
    }
    let values: Vec<f64> = predicted
        .mean
        .iter()
        .zip(actual)
        .map(|(p, a)| p - a)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(MonitorError::NonFinite(i));
    }
    Ok(ResidualSeries {
        pair,
        timestamps: timestamps.to_vec(),
        values,
    })
}

/// X-bar chart windowing parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XbarConfig {
    /// Width of each averaging window, in days.
    pub window_days: f64,
    /// Windows holding fewer than this fraction of the nominal sample count
    /// are flagged sparse and excluded from alarming.
    pub min_count_fraction: f64,
}

impl Default for XbarConfig {
    fn default() -> Self {
        Self {
            window_days: 28.0,
            min_count_fraction: 0.1,
        }
    }
}

/// One averaging window of the chart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XbarWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    pub n_samples: usize,
    pub mean: f64,
    pub sparse: bool,
}

/// Consecutive non-overlapping calendar windows anchored at the first
/// residual timestamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct XbarChart {
    pub windows: Vec<XbarWindow>,
    /// Expected samples per full window at the series' median sampling
    /// interval; the subgroup size for X-bar control limits.
    pub nominal_count: usize,
    pub window_secs: i64,
}

/// Average residuals over fixed calendar windows.
pub fn xbar_chart(series: &ResidualSeries, config: &XbarConfig) -> Result<XbarChart, MonitorError> {
    if series.values.is_empty() {
        return Err(MonitorError::EmptySeries);
    }
    if !(config.window_days > 0.0) {
        return Err(MonitorError::BadWindow(config.window_days));
    }
    let window_secs = (config.window_days * 86_400.0).round() as i64;

    // Median sampling interval, robust to gaps, sets the nominal count.
    let nominal_count = if series.timestamps.len() < 2 {
        1
    } else {
        let mut deltas: Vec<i64> = series
            .timestamps
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        deltas.sort_unstable();
        let median = deltas[deltas.len() / 2].max(1);
        ((window_secs as f64 / median as f64).round() as usize).max(1)
    };
    let min_count = ((config.min_count_fraction * nominal_count as f64).ceil() as usize).max(1);

    let anchor = series.timestamps[0];
    let mut windows = Vec::new();
    let mut idx = 0usize;
    while idx < series.timestamps.len() {
        let k = (series.timestamps[idx] - anchor) / window_secs;
        let start = anchor + k * window_secs;
        let end = start + window_secs;
        let mut sum = 0.0;
        let mut count = 0usize;
        while idx < series.timestamps.len() && series.timestamps[idx] < end {
            sum += series.values[idx];
            count += 1;
            idx += 1;
        }
        windows.push(XbarWindow {
            start,
            end,
            n_samples: count,
            mean: sum / count as f64,
            sparse: count < min_count,
        });
    }
    Ok(XbarChart {
        windows,
        nominal_count,
        window_secs,
    })
}

/// Robust threshold parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// How many random subsets to draw.
    pub n_subsets: usize,
    /// Fraction of the calibration residuals in each subset (drawn without
    /// replacement within a subset).
    pub subset_fraction: f64,
    /// Minimum residual count in the calibration window.
    pub min_window_len: usize,
    pub seed: u64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            n_subsets: 20,
            subset_fraction: 0.25,
            min_window_len: 100,
            seed: 0,
        }
    }
}

/// Robust thresholds `thr = μ̄ ± 3σ̄` from averaged subset statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    pub mu_bar: f64,
    pub sigma_bar: f64,
    /// μ̄ + 3σ̄ on the per-point residual scale.
    pub upper: f64,
    /// μ̄ − 3σ̄ on the per-point residual scale.
    pub lower: f64,
    pub n_subsets: usize,
    pub subset_fraction: f64,
    pub subset_size: usize,
    pub seed: u64,
}

impl ThresholdEstimate {
    /// Control limits for comparing window means of `subgroup_size` samples:
    /// μ̄ ± 3σ̄/√n. The per-point band (`upper`/`lower`) describes individual
    /// residuals; means of n points scatter √n more tightly.
    pub fn xbar_limits(&self, subgroup_size: usize) -> (f64, f64) {
        let scale = (subgroup_size.max(1) as f64).sqrt();
        (
            self.mu_bar - 3.0 * self.sigma_bar / scale,
            self.mu_bar + 3.0 * self.sigma_bar / scale,
        )
    }
}

fn subset_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Draw `n_subsets` random subsets of the residuals inside `window`, average
/// their per-subset means and standard deviations, and return μ̄ ± 3σ̄.
/// Deterministic per seed.
pub fn robust_thresholds(
    series: &ResidualSeries,
    window: TimeWindow,
    config: &ThresholdConfig,
) -> Result<ThresholdEstimate, MonitorError> {
    let pool: Vec<f64> = series
        .timestamps
        .iter()
        .zip(&series.values)
        .filter(|(t, _)| window.contains(**t))
        .map(|(_, v)| *v)
        .collect();
    if pool.len() < config.min_window_len.max(1) {
        return Err(MonitorError::WindowTooSmall {
            need: config.min_window_len.max(1),
            got: pool.len(),
        });
    }
    let subset_size = ((config.subset_fraction * pool.len() as f64).round() as usize)
        .clamp(1, pool.len());

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut mu_sum = 0.0;
    let mut sigma_sum = 0.0;
    let n_subsets = config.n_subsets.max(1);
    for _ in 0..n_subsets {
        let subset: Vec<f64> = if subset_size == pool.len() {
            pool.clone()
        } else {
            rand::seq::index::sample(&mut rng, pool.len(), subset_size)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        };
        let (mu, sigma) = subset_mean_std(&subset);
        mu_sum += mu;
        sigma_sum += sigma;
    }
    let mu_bar = mu_sum / n_subsets as f64;
    let sigma_bar = sigma_sum / n_subsets as f64;
    Ok(ThresholdEstimate {
        mu_bar,
        sigma_bar,
        upper: mu_bar + 3.0 * sigma_bar,
        lower: mu_bar - 3.0 * sigma_bar,
        n_subsets,
        subset_fraction: config.subset_fraction,
        subset_size,
        seed: config.seed,
    })
}

/// Alarm evaluation parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectConfig {
    /// Consecutive alarmed, non-sparse windows required before the system
    /// alarm fires.
    pub persistence: usize,
    /// Windows starting before this instant get alarm flags but do not feed
    /// the system alarm (e.g. the threshold calibration period).
    pub monitor_start: Option<Timestamp>,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            persistence: 1,
            monitor_start: None,
        }
    }
}

/// One chart window with its alarm state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChartWindow {
    pub start: Timestamp,
    pub end: Timestamp,
    pub n_samples: usize,
    pub mean: f64,
    pub sparse: bool,
    /// Mean outside `[lower, upper]`.
    pub alarm: bool,
    /// Whether this window counts toward the system alarm (non-sparse and
    /// inside the monitored period).
    pub evaluated: bool,
}

/// X-bar chart compared against fixed control limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlChartResult {
    pub windows: Vec<ChartWindow>,
    pub lower: f64,
    pub upper: f64,
    pub persistence: usize,
    /// Start of the first run of `persistence` consecutive alarmed, evaluated
    /// windows.
    pub first_alarm: Option<Timestamp>,
}

/// Flag windows whose mean falls outside `[lower, upper]` and locate the
/// first persistent run among evaluated windows.
pub fn detect(
    chart: &XbarChart,
    lower: f64,
    upper: f64,
    config: &DetectConfig,
) -> ControlChartResult {
    let persistence = config.persistence.max(1);
    let windows: Vec<ChartWindow> = chart
        .windows
        .iter()
        .map(|w| {
            let alarm = w.mean < lower || w.mean > upper;
            let in_monitored = config.monitor_start.map_or(true, |t| w.start >= t);
            ChartWindow {
                start: w.start,
                end: w.end,
                n_samples: w.n_samples,
                mean: w.mean,
                sparse: w.sparse,
                alarm,
                evaluated: !w.sparse && in_monitored,
            }
        })
        .collect();

    let mut first_alarm = None;
    let mut run = 0usize;
    let mut run_start = None;
    for w in &windows {
        if w.evaluated && w.alarm {
            if run == 0 {
                run_start = Some(w.start);
            }
            run += 1;
            if run >= persistence {
                first_alarm = run_start;
                break;
            }
        } else {
            run = 0;
            run_start = None;
        }
    }

    ControlChartResult {
        windows,
        lower,
        upper,
        persistence,
        first_alarm,
    }
}

/// Export a chart as CSV:
/// `window_start,window_end,n_samples,xbar,upper,lower,sparse,alarm`.
pub fn write_chart_csv(path: &Path, chart: &ControlChartResult) -> Result<(), MonitorError> {
    let io_err = |source| MonitorError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(
        w,
        "window_start,window_end,n_samples,xbar,upper,lower,sparse,alarm"
    )
    .map_err(io_err)?;
    for win in &chart.windows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            format_timestamp(win.start),
            format_timestamp(win.end),
            win.n_samples,
            fmt_f64(win.mean),
            fmt_f64(chart.upper),
            fmt_f64(chart.lower),
            win.sparse,
            win.alarm
        )
        .map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

fn fmt_f64(v: f64) -> String {
    serde_json::to_string(&v).expect("finite f64")
}
