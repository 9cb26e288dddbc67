//! Condition monitoring for wind-turbine blades from SCADA edge-frequency data.
//!
//! The three blades on a turbine are nominally identical and see the same
//! environment, so the edge frequency of one blade predicts the edge frequency
//! of another. This crate learns those pairwise relationships with exact
//! Gaussian process regression on a healthy baseline and watches for them to
//! break down:
//!
//! - [`timeseries`] — CSV ingest, timestamp alignment, iterative 3σ outlier
//!   removal, training-based normalization, uniform training sampling
//! - [`kernels`] — squared-exponential + Bayesian-linear + noise covariance
//!   functions and the train/cross/test matrix builders
//! - [`optim`] — Nelder-Mead simplex minimizer
//! - [`gp`] — negative log marginal likelihood (value and gradient),
//!   multi-restart training, posterior, chunked prediction, model persistence
//! - [`monitor`] — residual series, X-bar control charts, robust 3σ
//!   thresholds, alarm detection
//! - [`synth`] — synthetic three-blade dataset with a linearly deteriorating
//!   blade C, for end-to-end exercise of the pipeline

pub mod gp;
pub mod kernels;
pub mod monitor;
pub mod optim;
pub mod synth;
pub mod timeseries;

pub use gp::{Prediction, TrainConfig, TrainedGpModel};
pub use kernels::Hyperparameters;
pub use monitor::{BladePair, ControlChartResult, ResidualSeries, ThresholdEstimate};
pub use timeseries::{NormalizationStats, TimeSeriesDataset, TimeWindow, TrainingSelection};
