//! Exact Gaussian process inference.
//!
//! Training minimizes the negative log marginal likelihood
//!
//! ```text
//! −L = ½ yᵀK_θ⁻¹y + ½ log|K_θ| + (N/2) log 2π
//! ```
//!
//! over log-hyperparameters with multi-restart Nelder-Mead; the analytic
//! gradient is implemented for verification (and available for gradient-based
//! refinement) but the default search is derivative-free. All solves go
//! through the cached Cholesky factor of `K_θ` — never an explicit inverse.
//! Prediction over large test sets runs in fixed-size chunks whose results
//! are independent of the chunk size.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{
    build_cross_cov, CholeskyFactor, CovKind, Hyperparameters, KernelError, PairwiseCache,
};
use crate::optim::{nelder_mead, NelderMeadConfig};
use crate::timeseries::{DataError, NormalizationStats, TimeSeriesDataset, TrainingSelection};

use faer::Mat;

#[derive(Debug, Error)]
pub enum GpError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("X has {0} rows but y has {1} values")]
    LengthMismatch(usize, usize),
    #[error("training needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("test inputs have {got} columns, model was trained on {expected}")]
    InputDimension { expected: usize, got: usize },
    #[error("non-finite test input")]
    NonFiniteInput,
    #[error("chunk size must be at least 1")]
    ZeroChunk,
    #[error("all {0} optimizer restarts failed to factorize the covariance")]
    AllRestartsFailed(usize),
    #[error("model file {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("model JSON {path}: {source}")]
    Json {
        path: std::path::PathBuf,
        source: serde_json::Error,
    },
}

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

fn column(values: &[f64]) -> Mat<f64> {
    Mat::from_fn(values.len(), 1, |i, _| values[i])
}

/// −L for the given hyperparameters, computed via Cholesky
/// (log|K_θ| = 2 Σ log L_ii). Lower is better.
pub fn nlml(phi: &Hyperparameters, x: ArrayView2<'_, f64>, y: &[f64]) -> Result<f64, GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch(x.nrows(), y.len()));
    }
    let cache = PairwiseCache::symmetric(x)?;
    nlml_with_cache(&cache, phi, y)
}

fn nlml_with_cache(
    cache: &PairwiseCache,
    phi: &Hyperparameters,
    y: &[f64],
) -> Result<f64, GpError> {
    let k = cache.assemble(phi, CovKind::Train);
    let chol = k.cholesky()?;
    let alpha = chol.solve(&column(y));
    let n = y.len();
    let fit: f64 = (0..n).map(|i| y[i] * alpha[(i, 0)]).sum();
    Ok(0.5 * fit + 0.5 * chol.log_det() + 0.5 * n as f64 * LOG_2PI)
}

/// Gradient of −L with respect to the log-hyperparameters
/// [log σ_f, log λ, log σ_0, log σ_N]:
///
/// ```text
/// ∂(−L)/∂φᵢ = ½ tr[K_θ⁻¹ ∂K_θ/∂φᵢ] − ½ yᵀK_θ⁻¹ (∂K_θ/∂φᵢ) K_θ⁻¹ y
/// ```
///
/// chain-ruled into log space. The explicit K_θ⁻¹ here is acceptable: the
/// gradient is a verification tool, not the training path.
pub fn nlml_grad(
    phi: &Hyperparameters,
    x: ArrayView2<'_, f64>,
    y: &[f64],
) -> Result<[f64; 4], GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch(x.nrows(), y.len()));
    }
    let n = y.len();
    let cache = PairwiseCache::symmetric(x)?;
    let k = cache.assemble(phi, CovKind::Train);
    let chol = k.cholesky()?;
    let alpha = chol.solve(&column(y));
    let k_inv = chol.solve(&Mat::identity(n, n));

    let sf2 = phi.sigma_f * phi.sigma_f;
    let s02 = phi.sigma_0 * phi.sigma_0;
    let sn2 = phi.sigma_n * phi.sigma_n;
    let inv_l2 = 1.0 / (phi.lambda * phi.lambda);

    // Accumulate ½ tr(K⁻¹ ∂K) − ½ αᵀ ∂K α for each derivative matrix without
    // materializing it. In log space:
    //   ∂K/∂log σ_f = 2 K_se
    //   ∂K/∂log λ   = K_se ∘ (‖x_p−x_q‖² / λ²)
    //   ∂K/∂log σ_0 = 2 K_bl
    //   ∂K/∂log σ_N = 2 σ_N² I
    let mut grad = [0.0f64; 4];
    for i in 0..n {
        for j in 0..n {
            let se = sf2 * (-cache.sqdist(i, j) * 0.5 * inv_l2).exp();
            let bl = s02 * cache.dot(i, j);
            let weight = k_inv[(i, j)] - alpha[(i, 0)] * alpha[(j, 0)];
            grad[0] += weight * 2.0 * se;
            grad[1] += weight * se * cache.sqdist(i, j) * inv_l2;
            grad[2] += weight * 2.0 * bl;
        }
    }
    for g in grad.iter_mut() {
        *g *= 0.5;
    }
    let tr_kinv: f64 = (0..n).map(|i| k_inv[(i, i)]).sum();
    let alpha_sq: f64 = (0..n).map(|i| alpha[(i, 0)] * alpha[(i, 0)]).sum();
    grad[3] = sn2 * (tr_kinv - alpha_sq);

    Ok(grad)
}

/// How [`train`] searches for hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Nelder-Mead restarts: one canonical start plus `restarts − 1` seeded
    /// random starts. The negative log marginal likelihood often has several
    /// local minima.
    pub restarts: usize,
    pub nm: NelderMeadConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            // Looser than the bare optimizer defaults: hyperparameter
            // precision below 1e-4 in log space is statistically meaningless
            // and each evaluation costs a Cholesky of K_θ.
            nm: NelderMeadConfig {
                max_evals: 500,
                tol_f: 1e-5,
                tol_x: 1e-4,
                ..NelderMeadConfig::default()
            },
            seed: 0,
        }
    }
}

/// Canonical optimizer start for unit-variance data:
/// log σ_f = log λ = log σ_0 = 0, log σ_N = log 0.1.
fn canonical_start() -> [f64; 4] {
    [0.0, 0.0, 0.0, 0.1f64.ln()]
}

/// Summary of the winning restart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingLog {
    /// Final −L of the selected restart.
    pub nlml: f64,
    pub restart_index: usize,
    pub iterations: usize,
    /// Objective evaluations across all restarts.
    pub evaluations: usize,
    /// Whether the winning restart met the optimizer tolerances; best-so-far
    /// hyperparameters are returned either way.
    pub converged: bool,
    /// Final −L per restart (∞ when every evaluation failed to factorize).
    pub restart_nlmls: Vec<f64>,
}

/// A trained GP: inputs, outputs, learned φ, and the cached factorization.
#[derive(Debug, Clone)]
pub struct TrainedGpModel {
    x_train: Array2<f64>,
    y_train: Vec<f64>,
    phi: Hyperparameters,
    chol: CholeskyFactor,
    alpha: Vec<f64>,
    norm_stats: Option<NormalizationStats>,
    training_log: TrainingLog,
}

/// Predictive mean and per-point variance at test inputs, in normalized
/// units. `noisy` marks whether σ_N² was added (predicting `y*` rather than
/// the noise-free `f*`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub noisy: bool,
}

/// Full posterior at a set of evaluation points (noise-free covariance).
#[derive(Debug, Clone)]
pub struct Posterior {
    pub mean: Vec<f64>,
    pub cov: Array2<f64>,
}

/// Learn hyperparameters by multi-restart Nelder-Mead over the log-space
/// NLML, then cache the Cholesky factorization and `α = K_θ⁻¹y`.
/// Deterministic for a fixed seed; ties between restarts break toward the
/// lower restart index. Optimizer non-convergence is reported in the training
/// log, not raised.
pub fn train(
    x: Array2<f64>,
    y: Vec<f64>,
    config: &TrainConfig,
) -> Result<TrainedGpModel, GpError> {
    if x.nrows() != y.len() {
        return Err(GpError::LengthMismatch(x.nrows(), y.len()));
    }
    if x.nrows() < 2 {
        return Err(GpError::TooFewPoints(x.nrows()));
    }
    let restarts = config.restarts.max(1);
    let cache = PairwiseCache::symmetric(x.view())?;

    let mut starts = vec![canonical_start()];
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    for _ in 1..restarts {
        let base = canonical_start();
        let mut s = [0.0f64; 4];
        for (si, bi) in s.iter_mut().zip(base) {
            *si = bi + rng.gen_range(-2.0..2.0);
        }
        starts.push(s);
    }

    struct Restart {
        x_min: Vec<f64>,
        f_min: f64,
        iterations: usize,
        evaluations: usize,
        converged: bool,
    }

    let outcomes: Vec<Restart> = starts
        .par_iter()
        .map(|start| {
            let objective = |theta: &[f64]| -> f64 {
                let log: [f64; 4] = [theta[0], theta[1], theta[2], theta[3]];
                if log.iter().any(|v| !v.is_finite() || v.abs() > 300.0) {
                    return f64::INFINITY;
                }
                let phi = Hyperparameters::from_log(&log);
                match nlml_with_cache(&cache, &phi, &y) {
                    Ok(v) => v,
                    Err(_) => f64::INFINITY,
                }
            };
            let r = nelder_mead(objective, start, &config.nm);
            Restart {
                x_min: r.x_min,
                f_min: r.f_min,
                iterations: r.iterations,
                evaluations: r.evaluations,
                converged: r.converged,
            }
        })
        .collect();

    let total_evals: usize = outcomes.iter().map(|o| o.evaluations).sum();
    let restart_nlmls: Vec<f64> = outcomes.iter().map(|o| o.f_min).collect();
    let mut best: Option<usize> = None;
    for (i, o) in outcomes.iter().enumerate() {
        if !o.f_min.is_finite() {
            continue;
        }
        if best.map_or(true, |b| o.f_min < outcomes[b].f_min) {
            best = Some(i);
        }
    }
    let best = best.ok_or(GpError::AllRestartsFailed(restarts))?;
    let winner = &outcomes[best];
    let phi = Hyperparameters::from_log(&[
        winner.x_min[0],
        winner.x_min[1],
        winner.x_min[2],
        winner.x_min[3],
    ]);

    let k = cache.assemble(&phi, CovKind::Train);
    let chol = k.cholesky()?;
    let alpha_col = chol.solve(&column(&y));
    let alpha: Vec<f64> = (0..y.len()).map(|i| alpha_col[(i, 0)]).collect();

    Ok(TrainedGpModel {
        x_train: x,
        y_train: y,
        phi,
        chol,
        alpha,
        norm_stats: None,
        training_log: TrainingLog {
            nlml: winner.f_min,
            restart_index: best,
            iterations: winner.iterations,
            evaluations: total_evals,
            converged: winner.converged,
            restart_nlmls,
        },
    })
}

impl TrainedGpModel {
    /// Build a model directly from known hyperparameters (no optimization).
    pub fn from_hyperparameters(
        x: Array2<f64>,
        y: Vec<f64>,
        phi: Hyperparameters,
    ) -> Result<Self, GpError> {
        if x.nrows() != y.len() {
            return Err(GpError::LengthMismatch(x.nrows(), y.len()));
        }
        let cache = PairwiseCache::symmetric(x.view())?;
        let k = cache.assemble(&phi, CovKind::Train);
        let chol = k.cholesky()?;
        let alpha_col = chol.solve(&column(&y));
        let alpha: Vec<f64> = (0..y.len()).map(|i| alpha_col[(i, 0)]).collect();
        let nlml_value = {
            let n = y.len() as f64;
            let fit: f64 = y.iter().zip(&alpha).map(|(yi, ai)| yi * ai).sum();
            0.5 * fit + 0.5 * chol.log_det() + 0.5 * n * LOG_2PI
        };
        Ok(Self {
            x_train: x,
            y_train: y,
            phi,
            chol,
            alpha,
            norm_stats: None,
            training_log: TrainingLog {
                nlml: nlml_value,
                restart_index: 0,
                iterations: 0,
                evaluations: 0,
                converged: true,
                restart_nlmls: vec![nlml_value],
            },
        })
    }

    pub fn with_norm_stats(mut self, stats: NormalizationStats) -> Self {
        self.norm_stats = Some(stats);
        self
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.phi
    }

    pub fn training_log(&self) -> &TrainingLog {
        &self.training_log
    }

    pub fn norm_stats(&self) -> Option<&NormalizationStats> {
        self.norm_stats.as_ref()
    }

    pub fn x_train(&self) -> ArrayView2<'_, f64> {
        self.x_train.view()
    }

    pub fn y_train(&self) -> &[f64] {
        &self.y_train
    }

    pub fn cholesky(&self) -> &CholeskyFactor {
        &self.chol
    }

    fn check_inputs(&self, x_star: ArrayView2<'_, f64>) -> Result<(), GpError> {
        if x_star.ncols() != self.x_train.ncols() {
            return Err(GpError::InputDimension {
                expected: self.x_train.ncols(),
                got: x_star.ncols(),
            });
        }
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(GpError::NonFiniteInput);
        }
        Ok(())
    }

    /// Predictive mean `K_*ᵀ K_θ⁻¹ y` (via the cached α) and per-point
    /// variance `diag(K_**) − ‖L⁻¹K_*‖²` columnwise, evaluated in chunks of
    /// `chunk_size` test points. Chunking is exact: results do not depend on
    /// the chunk size. With `noisy`, σ_N² is added to the variance.
    pub fn predict(
        &self,
        x_star: ArrayView2<'_, f64>,
        chunk_size: usize,
        noisy: bool,
    ) -> Result<Prediction, GpError> {
        if chunk_size == 0 {
            return Err(GpError::ZeroChunk);
        }
        self.check_inputs(x_star)?;
        let m = x_star.nrows();
        let sn2 = self.phi.sigma_n * self.phi.sigma_n;
        let sf2 = self.phi.sigma_f * self.phi.sigma_f;
        let s02 = self.phi.sigma_0 * self.phi.sigma_0;

        let chunks: Vec<(usize, usize)> = (0..m)
            .step_by(chunk_size)
            .map(|start| (start, (start + chunk_size).min(m)))
            .collect();

        let results: Vec<Result<(Vec<f64>, Vec<f64>), GpError>> = chunks
            .par_iter()
            .map(|&(start, end)| {
                let block = x_star.slice_axis(Axis(0), ndarray::Slice::from(start..end));
                let k_star = build_cross_cov(self.x_train.view(), block, &self.phi)?;
                let n = self.x_train.nrows();
                let width = end - start;
                let mut mean = vec![0.0; width];
                for j in 0..width {
                    let mut acc = 0.0;
                    for i in 0..n {
                        acc += k_star.get(i, j) * self.alpha[i];
                    }
                    mean[j] = acc;
                }
                let mut v = k_star.into_mat();
                self.chol.solve_lower_in_place(&mut v);
                let mut variance = vec![0.0; width];
                for j in 0..width {
                    let prior = sf2
                        + s02
                            * block
                                .row(j)
                                .iter()
                                .map(|x| x * x)
                                .sum::<f64>();
                    let reduction: f64 = (0..n).map(|i| v[(i, j)] * v[(i, j)]).sum();
                    variance[j] = (prior - reduction).max(0.0);
                    if noisy {
                        variance[j] += sn2;
                    }
                }
                Ok((mean, variance))
            })
            .collect();

        let mut mean = Vec::with_capacity(m);
        let mut variance = Vec::with_capacity(m);
        for r in results {
            let (mc, vc) = r?;
            mean.extend(mc);
            variance.extend(vc);
        }
        Ok(Prediction {
            mean,
            variance,
            noisy,
        })
    }

    /// Posterior mean and full covariance at evaluation points, using the
    /// noise-free covariance: `N(KᵀK_θ⁻¹y, K_eval − KᵀK_θ⁻¹K)`. Exposed for
    /// diagnostics and tests; day-to-day prediction goes through
    /// [`Self::predict`].
    pub fn posterior(&self, x_eval: ArrayView2<'_, f64>) -> Result<Posterior, GpError> {
        self.check_inputs(x_eval)?;
        let m = x_eval.nrows();
        let n = self.x_train.nrows();
        let k_cross = build_cross_cov(self.x_train.view(), x_eval, &self.phi)?;
        let k_eval = crate::kernels::build_test_cov(x_eval, &self.phi)?;

        let mut mean = vec![0.0; m];
        for j in 0..m {
            mean[j] = (0..n).map(|i| k_cross.get(i, j) * self.alpha[i]).sum();
        }

        let mut v = k_cross.into_mat();
        self.chol.solve_lower_in_place(&mut v);
        let mut cov = Array2::zeros((m, m));
        for a in 0..m {
            for b in 0..m {
                let reduction: f64 = (0..n).map(|i| v[(i, a)] * v[(i, b)]).sum();
                cov[(a, b)] = k_eval.get(a, b) - reduction;
            }
        }
        Ok(Posterior { mean, cov })
    }
}

/// On-disk model schema. Training inputs are re-derivable from the dataset
/// plus the stored selection, and the Cholesky factorization is recomputed on
/// load, so the document stays small and the rebuild is exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    /// Label for the blade pair or experiment this model belongs to.
    pub label: String,
    pub hyperparameters: Hyperparameters,
    pub norm_stats: NormalizationStats,
    pub training: TrainingSelection,
    /// Channels feeding the GP inputs, in column order.
    pub input_channels: Vec<String>,
    /// Channel the GP predicts.
    pub output_channel: String,
    pub training_log: TrainingLog,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn save_model(path: &Path, doc: &ModelDocument) -> Result<(), GpError> {
    let json = serde_json::to_string_pretty(doc).map_err(|source| GpError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, json + "\n").map_err(|source| GpError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<ModelDocument, GpError> {
    let text = std::fs::read_to_string(path).map_err(|source| GpError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| GpError::Json {
        path: path.to_path_buf(),
        source,
    })
}

impl ModelDocument {
    /// Reconstruct the trained model against the (cleaned, unnormalized)
    /// dataset it was trained on: select the training rows, normalize with
    /// the stored statistics, and recompute the factorization from the stored
    /// hyperparameters. Round-trips predictions to machine precision.
    pub fn rebuild(&self, dataset: &TimeSeriesDataset) -> Result<TrainedGpModel, GpError> {
        let normalized = crate::timeseries::normalize(dataset, &self.norm_stats)?;
        let rows = &self.training.indices;
        let mut x = Array2::zeros((rows.len(), self.input_channels.len()));
        for (c, name) in self.input_channels.iter().enumerate() {
            let col = normalized.channel(name)?;
            for (r, &row) in rows.iter().enumerate() {
                x[(r, c)] = col[row];
            }
        }
        let out = normalized.channel(&self.output_channel)?;
        let y: Vec<f64> = rows.iter().map(|&r| out[r]).collect();
        let mut model = TrainedGpModel::from_hyperparameters(x, y, self.hyperparameters)?;
        model.norm_stats = Some(self.norm_stats.clone());
        model.training_log = self.training_log.clone();
        Ok(model)
    }
}
