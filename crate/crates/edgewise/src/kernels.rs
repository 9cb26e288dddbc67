//! Covariance functions and matrix builders.
//!
//! The model covariance is the sum of a squared-exponential term, a
//! Bayesian-linear (dot-product) term, and — between training points only —
//! additive observation noise:
//!
//! ```text
//! k(x_p, x_q) = σ_f² exp(−‖x_p − x_q‖² / 2λ²) + σ_0² (x_p · x_q) [+ σ_N² δ_pq]
//! ```
//!
//! Three matrices are assembled from it: the train covariance `K_θ` (with the
//! noise term on the diagonal), the train/test cross covariance `K_*`, and
//! the test covariance `K_**` (both noise-free — the noise term is never
//! added when predicting the underlying function).

use faer::{Mat, Side};
use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("input dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("hyperparameter `{0}` must be strictly positive, got {1}")]
    NonPositiveHyperparameter(&'static str, f64),
    #[error("non-finite entry in input matrix")]
    NonFiniteInput,
    #[error("covariance matrix is not positive definite (jitter escalated {attempts} times)")]
    NotPositiveDefinite { attempts: usize },
}

/// The tuple φ = {σ_f, λ, σ_0, σ_N} governing one GP, in linear space.
/// Optimization happens in log space to keep every component positive; see
/// [`Hyperparameters::from_log`] / [`Hyperparameters::to_log`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Signal amplitude of the squared-exponential term.
    pub sigma_f: f64,
    /// Shared length-scale across all input dimensions.
    pub lambda: f64,
    /// Amplitude of the Bayesian-linear term.
    pub sigma_0: f64,
    /// Observation noise amplitude.
    pub sigma_n: f64,
}

impl Hyperparameters {
    pub fn new(sigma_f: f64, lambda: f64, sigma_0: f64, sigma_n: f64) -> Result<Self, KernelError> {
        for (name, v) in [
            ("sigma_f", sigma_f),
            ("lambda", lambda),
            ("sigma_0", sigma_0),
            ("sigma_n", sigma_n),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(KernelError::NonPositiveHyperparameter(name, v));
            }
        }
        Ok(Self {
            sigma_f,
            lambda,
            sigma_0,
            sigma_n,
        })
    }

    pub fn from_log(log: &[f64; 4]) -> Self {
        Self {
            sigma_f: log[0].exp(),
            lambda: log[1].exp(),
            sigma_0: log[2].exp(),
            sigma_n: log[3].exp(),
        }
    }

    pub fn to_log(&self) -> [f64; 4] {
        [
            self.sigma_f.ln(),
            self.lambda.ln(),
            self.sigma_0.ln(),
            self.sigma_n.ln(),
        ]
    }
}

/// The fixed zero mean function m(x). De-trending happens in normalization,
/// so the prior mean carries no structure; predictions still recover nonzero
/// means through the data.
pub fn zero_mean(_x: &[f64]) -> f64 {
    0.0
}

/// Squared-exponential covariance between two input vectors.
pub fn k_se(x_p: &[f64], x_q: &[f64], sigma_f: f64, lambda: f64) -> Result<f64, KernelError> {
    if x_p.len() != x_q.len() {
        return Err(KernelError::DimensionMismatch(x_p.len(), x_q.len()));
    }
    let sq: f64 = x_p
        .iter()
        .zip(x_q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sigma_f * sigma_f * (-sq / (2.0 * lambda * lambda)).exp())
}

/// Bayesian-linear (dot-product) covariance between two input vectors.
pub fn k_bl(x_p: &[f64], x_q: &[f64], sigma_0: f64) -> Result<f64, KernelError> {
    if x_p.len() != x_q.len() {
        return Err(KernelError::DimensionMismatch(x_p.len(), x_q.len()));
    }
    let dot: f64 = x_p.iter().zip(x_q).map(|(a, b)| a * b).sum();
    Ok(sigma_0 * sigma_0 * dot)
}

/// Kronecker-delta noise term σ_N²·I over training indices. Added to the
/// train covariance only, never to the cross or test matrices.
pub fn k_noise(i: usize, j: usize, sigma_n: f64) -> f64 {
    if i == j {
        sigma_n * sigma_n
    } else {
        0.0
    }
}

/// Which covariance matrix a [`CovarianceMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// K_θ: training × training, including the noise diagonal.
    Train,
    /// K_*: training × test, noise-free.
    Cross,
    /// K_**: test × test, noise-free.
    Test,
}

/// A dense covariance matrix tagged with its role.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    mat: Mat<f64>,
    kind: CovKind,
}

impl CovarianceMatrix {
    pub fn kind(&self) -> CovKind {
        self.kind
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn as_mat(&self) -> &Mat<f64> {
        &self.mat
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.mat
    }

    /// Lower-triangular Cholesky factor under the escalating jitter policy.
    /// Only meaningful for the train kind; the test kind is merely positive
    /// semi-definite.
    pub fn cholesky(&self) -> Result<CholeskyFactor, KernelError> {
        CholeskyFactor::of(&self.mat)
    }
}

/// Jitter magnitudes tried, as fractions of the mean diagonal, when a plain
/// factorization fails.
const JITTER_STEPS: [f64; 3] = [1e-10, 1e-8, 1e-6];

/// Cached lower-triangular Cholesky factor L with L·Lᵀ = K (+ jitter·I).
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Mat<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn of(mat: &Mat<f64>) -> Result<Self, KernelError> {
        let n = mat.nrows();
        if let Ok(llt) = mat.llt(Side::Lower) {
            let mut lower = Mat::zeros(n, n);
            for j in 0..n {
                for i in j..n {
                    lower[(i, j)] = llt.L()[(i, j)];
                }
            }
            return Ok(Self { lower, jitter: 0.0 });
        }
        let mean_diag = (0..n).map(|i| mat[(i, i)]).sum::<f64>() / n as f64;
        for (attempts, eps) in JITTER_STEPS.iter().enumerate() {
            let jitter = eps * mean_diag;
            let mut jittered = mat.clone();
            for i in 0..n {
                jittered[(i, i)] += jitter;
            }
            if let Ok(llt) = jittered.llt(Side::Lower) {
                let mut lower = Mat::zeros(n, n);
                for j in 0..n {
                    for i in j..n {
                        lower[(i, j)] = llt.L()[(i, j)];
                    }
                }
                let _ = attempts;
                return Ok(Self { lower, jitter });
            }
        }
        Err(KernelError::NotPositiveDefinite {
            attempts: JITTER_STEPS.len(),
        })
    }

    pub fn lower(&self) -> &Mat<f64> {
        &self.lower
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// log |K| = 2 Σ log L_ii.
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>()
    }

    /// Solve L·out = rhs in place (forward substitution), multi-column.
    pub fn solve_lower_in_place(&self, rhs: &mut Mat<f64>) {
        faer::linalg::triangular_solve::solve_lower_triangular_in_place(
            self.lower.as_ref(),
            rhs.as_mut(),
            faer::get_global_parallelism(),
        );
    }

    /// Solve K·out = rhs via the two triangular solves.
    pub fn solve(&self, rhs: &Mat<f64>) -> Mat<f64> {
        let mut out = rhs.clone();
        self.solve_lower_in_place(&mut out);
        faer::linalg::triangular_solve::solve_upper_triangular_in_place(
            self.lower.transpose(),
            out.as_mut(),
            faer::get_global_parallelism(),
        );
        out
    }
}

/// Precomputed pairwise squared distances and dot products between two input
/// sets, so covariance assembly during hyperparameter search costs only
/// elementwise work.
pub struct PairwiseCache {
    sqdist: Mat<f64>,
    dot: Mat<f64>,
    symmetric: bool,
}

impl PairwiseCache {
    /// Cache for rows(a) × rows(b). `a` and `b` may be the same matrix.
    pub fn new(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Self, KernelError> {
        if a.ncols() != b.ncols() {
            return Err(KernelError::DimensionMismatch(a.ncols(), b.ncols()));
        }
        if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFiniteInput);
        }
        let (n, m, d) = (a.nrows(), b.nrows(), a.ncols());
        let mut sqdist = Mat::zeros(n, m);
        let mut dot = Mat::zeros(n, m);
        // Column-parallel fill; each rayon task owns disjoint columns.
        let sq_cols: Vec<(usize, Vec<f64>, Vec<f64>)> = (0..m)
            .into_par_iter()
            .map(|q| {
                let xq = b.row(q);
                let mut sq_col = Vec::with_capacity(n);
                let mut dot_col = Vec::with_capacity(n);
                for p in 0..n {
                    let xp = a.row(p);
                    let mut sq = 0.0;
                    let mut dp = 0.0;
                    for k in 0..d {
                        let diff = xp[k] - xq[k];
                        sq += diff * diff;
                        dp += xp[k] * xq[k];
                    }
                    sq_col.push(sq);
                    dot_col.push(dp);
                }
                (q, sq_col, dot_col)
            })
            .collect();
        for (q, sq_col, dot_col) in sq_cols {
            for p in 0..n {
                sqdist[(p, q)] = sq_col[p];
                dot[(p, q)] = dot_col[p];
            }
        }
        Ok(Self {
            sqdist,
            dot,
            symmetric: false,
        })
    }

    /// Cache of a set against itself; assembly exploits symmetry.
    pub fn symmetric(x: ArrayView2<'_, f64>) -> Result<Self, KernelError> {
        let mut cache = Self::new(x, x)?;
        cache.symmetric = true;
        Ok(cache)
    }

    pub fn nrows(&self) -> usize {
        self.sqdist.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.sqdist.ncols()
    }

    /// Squared Euclidean distance between row `i` of the first input set and
    /// row `j` of the second.
    pub fn sqdist(&self, i: usize, j: usize) -> f64 {
        self.sqdist[(i, j)]
    }

    /// Dot product between row `i` of the first input set and row `j` of the
    /// second.
    pub fn dot(&self, i: usize, j: usize) -> f64 {
        self.dot[(i, j)]
    }

    /// Assemble k_se + k_bl (+ σ_N²·I when `kind` is Train) from the cache.
    pub fn assemble(&self, phi: &Hyperparameters, kind: CovKind) -> CovarianceMatrix {
        let (n, m) = (self.nrows(), self.ncols());
        debug_assert!(kind == CovKind::Cross || n == m);
        let sf2 = phi.sigma_f * phi.sigma_f;
        let s02 = phi.sigma_0 * phi.sigma_0;
        let sn2 = phi.sigma_n * phi.sigma_n;
        let inv_two_l2 = 1.0 / (2.0 * phi.lambda * phi.lambda);
        let mut mat = Mat::<f64>::zeros(n, m);

        if self.symmetric && kind != CovKind::Cross {
            let cols: Vec<(usize, Vec<f64>)> = (0..m)
                .into_par_iter()
                .map(|q| {
                    let mut col = Vec::with_capacity(q + 1);
                    for p in 0..=q {
                        col.push(
                            sf2 * (-self.sqdist[(p, q)] * inv_two_l2).exp()
                                + s02 * self.dot[(p, q)],
                        );
                    }
                    (q, col)
                })
                .collect();
            for (q, col) in cols {
                for (p, v) in col.into_iter().enumerate() {
                    mat[(p, q)] = v;
                    mat[(q, p)] = v;
                }
            }
            if kind == CovKind::Train {
                for i in 0..n {
                    mat[(i, i)] += sn2;
                }
            }
        } else {
            let cols: Vec<(usize, Vec<f64>)> = (0..m)
                .into_par_iter()
                .map(|q| {
                    let mut col = Vec::with_capacity(n);
                    for p in 0..n {
                        col.push(
                            sf2 * (-self.sqdist[(p, q)] * inv_two_l2).exp()
                                + s02 * self.dot[(p, q)],
                        );
                    }
                    (q, col)
                })
                .collect();
            for (q, col) in cols {
                for (p, v) in col.into_iter().enumerate() {
                    mat[(p, q)] = v;
                }
            }
        }
        CovarianceMatrix { mat, kind }
    }
}

/// K_θ: k_se + k_bl + σ_N²·I over the training inputs.
pub fn build_train_cov(
    x: ArrayView2<'_, f64>,
    phi: &Hyperparameters,
) -> Result<CovarianceMatrix, KernelError> {
    Ok(PairwiseCache::symmetric(x)?.assemble(phi, CovKind::Train))
}

/// K_*: k_se + k_bl between training and test inputs. No noise term.
pub fn build_cross_cov(
    x: ArrayView2<'_, f64>,
    x_star: ArrayView2<'_, f64>,
    phi: &Hyperparameters,
) -> Result<CovarianceMatrix, KernelError> {
    Ok(PairwiseCache::new(x, x_star)?.assemble(phi, CovKind::Cross))
}

/// K_**: k_se + k_bl over the test inputs. No noise term.
pub fn build_test_cov(
    x_star: ArrayView2<'_, f64>,
    phi: &Hyperparameters,
) -> Result<CovarianceMatrix, KernelError> {
    Ok(PairwiseCache::symmetric(x_star)?.assemble(phi, CovKind::Test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn phi(sigma_f: f64, lambda: f64, sigma_0: f64, sigma_n: f64) -> Hyperparameters {
        Hyperparameters::new(sigma_f, lambda, sigma_0, sigma_n).unwrap()
    }

    fn random_inputs(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn k_se_zero_distance_gives_signal_variance() {
        let x = [0.3, -1.2];
        assert!((k_se(&x, &x, 2.0, 1.0).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn k_se_closed_form() {
        let v = k_se(&[0.0], &[1.0], 1.0, 1.0).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-12);
        assert!((v - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn k_se_decays_to_zero() {
        let v = k_se(&[0.0], &[20.0], 1.0, 1.0).unwrap();
        assert!(v > 0.0 && v < 1e-80);
    }

    #[test]
    fn k_se_dimension_mismatch() {
        assert!(matches!(
            k_se(&[0.0], &[0.0, 1.0], 1.0, 1.0),
            Err(KernelError::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn k_bl_dot_product() {
        assert!((k_bl(&[1.0, 2.0], &[3.0, 4.0], 1.0).unwrap() - 11.0).abs() < 1e-15);
        assert_eq!(k_bl(&[1.0, 0.0], &[0.0, 5.0], 3.0).unwrap(), 0.0);
        let twice = k_bl(&[1.0, 2.0], &[3.0, 4.0], 2.0).unwrap();
        let base = k_bl(&[1.0, 2.0], &[3.0, 4.0], 2f64.sqrt()).unwrap();
        assert!((twice - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn k_noise_is_diagonal_only() {
        assert!((k_noise(3, 3, 0.1) - 0.01).abs() < 1e-17);
        assert_eq!(k_noise(3, 4, 0.1), 0.0);
    }

    #[test]
    fn zero_mean_is_zero() {
        assert_eq!(zero_mean(&[1.0, -7.0]), 0.0);
    }

    #[test]
    fn train_cov_single_point() {
        let x = array![[0.0, 0.0]];
        let k = build_train_cov(x.view(), &phi(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert_eq!(k.nrows(), 1);
        assert!((k.get(0, 0) - 2.0).abs() < 1e-15, "k_se=1 + k_bl=0 + noise=1");
    }

    #[test]
    fn train_cov_matches_scalar_kernels() {
        let x = random_inputs(12, 2, 1);
        let p = phi(1.3, 0.8, 0.6, 0.2);
        let k = build_train_cov(x.view(), &p).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let xi = x.row(i).to_vec();
                let xj = x.row(j).to_vec();
                let expect = k_se(&xi, &xj, p.sigma_f, p.lambda).unwrap()
                    + k_bl(&xi, &xj, p.sigma_0).unwrap()
                    + k_noise(i, j, p.sigma_n);
                assert!(
                    (k.get(i, j) - expect).abs() < 1e-12,
                    "entry ({i},{j}): {} vs {}",
                    k.get(i, j),
                    expect
                );
            }
        }
    }

    #[test]
    fn cross_cov_matches_scalar_kernels_and_transpose() {
        let x = random_inputs(7, 2, 2);
        let xs = random_inputs(5, 2, 3);
        let p = phi(0.9, 1.4, 0.5, 0.3);
        let k = build_cross_cov(x.view(), xs.view(), &p).unwrap();
        assert_eq!((k.nrows(), k.ncols()), (7, 5));
        for i in 0..7 {
            for j in 0..5 {
                let xi = x.row(i).to_vec();
                let xj = xs.row(j).to_vec();
                let expect = k_se(&xi, &xj, p.sigma_f, p.lambda).unwrap()
                    + k_bl(&xi, &xj, p.sigma_0).unwrap();
                assert!((k.get(i, j) - expect).abs() < 1e-12);
            }
        }
        let kt = build_cross_cov(xs.view(), x.view(), &p).unwrap();
        for i in 0..7 {
            for j in 0..5 {
                assert_eq!(k.get(i, j).to_bits(), kt.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn cross_cov_at_train_is_train_minus_noise() {
        let x = random_inputs(9, 2, 4);
        let p = phi(1.0, 1.0, 0.7, 0.4);
        let train = build_train_cov(x.view(), &p).unwrap();
        let cross = build_cross_cov(x.view(), x.view(), &p).unwrap();
        for i in 0..9 {
            for j in 0..9 {
                let noise = k_noise(i, j, p.sigma_n);
                assert!((train.get(i, j) - noise - cross.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn test_cov_diagonal_closed_form() {
        let xs = random_inputs(6, 2, 5);
        let p = phi(1.1, 0.9, 0.8, 0.2);
        let k = build_test_cov(xs.view(), &p).unwrap();
        for i in 0..6 {
            let norm2: f64 = xs.row(i).iter().map(|v| v * v).sum();
            let expect = p.sigma_f * p.sigma_f + p.sigma_0 * p.sigma_0 * norm2;
            assert!((k.get(i, i) - expect).abs() < 1e-12);
        }
        // And single-point zero case.
        let one = array![[0.0, 0.0]];
        let k1 = build_test_cov(one.view(), &phi(1.0, 1.0, 1.0, 1.0)).unwrap();
        assert!((k1.get(0, 0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn train_cov_is_exactly_symmetric() {
        let x = random_inputs(20, 3, 6);
        let k = build_train_cov(x.view(), &phi(1.0, 1.2, 0.5, 0.1)).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                assert_eq!(k.get(i, j).to_bits(), k.get(j, i).to_bits());
            }
        }
    }

    #[test]
    fn train_cov_smallest_eigenvalue_at_least_noise_floor() {
        // Eigen-decomposition oracle on small instances: K_se + K_bl is PSD,
        // so λ_min(K_θ) ≥ σ_N².
        for seed in 0..5u64 {
            let x = random_inputs(20, 2, 100 + seed);
            let p = phi(1.0, 1.0, 0.5, 0.3);
            let k = build_train_cov(x.view(), &p).unwrap();
            let eigs: Vec<f64> = k
                .as_mat()
                .self_adjoint_eigenvalues(Side::Lower)
                .expect("symmetric matrix");
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(
                min >= p.sigma_n * p.sigma_n - 1e-10,
                "λ_min = {min} below noise floor"
            );
        }
    }

    #[test]
    fn cholesky_succeeds_without_jitter_on_normalized_scale() {
        for seed in 0..3u64 {
            let x = random_inputs(300, 2, 200 + seed);
            let k = build_train_cov(x.view(), &phi(1.0, 1.0, 1.0, 1e-3)).unwrap();
            let chol = k.cholesky().unwrap();
            assert_eq!(chol.jitter(), 0.0);
        }
    }

    #[test]
    fn cholesky_reconstructs_matrix() {
        let x = random_inputs(15, 2, 7);
        let k = build_train_cov(x.view(), &phi(1.0, 1.0, 0.5, 0.2)).unwrap();
        let l = k.cholesky().unwrap();
        let rebuilt = l.lower() * l.lower().transpose();
        for i in 0..15 {
            for j in 0..15 {
                assert!((rebuilt[(i, j)] - k.get(i, j)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn hyperparameters_reject_nonpositive() {
        assert!(Hyperparameters::new(1.0, 0.0, 1.0, 1.0).is_err());
        assert!(Hyperparameters::new(1.0, 1.0, -2.0, 1.0).is_err());
        assert!(Hyperparameters::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn log_round_trip() {
        let p = phi(1.7, 0.3, 2.2, 0.05);
        let q = Hyperparameters::from_log(&p.to_log());
        assert!((p.sigma_f - q.sigma_f).abs() < 1e-14);
        assert!((p.lambda - q.lambda).abs() < 1e-14);
        assert!((p.sigma_0 - q.sigma_0).abs() < 1e-14);
        assert!((p.sigma_n - q.sigma_n).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        /// Stationarity: k_se depends only on the difference of its inputs.
        #[test]
        fn k_se_is_stationary(
            a in proptest::collection::vec(-5.0f64..5.0, 1..4),
            shift in -5.0f64..5.0,
            off in proptest::collection::vec(-2.0f64..2.0, 1..4),
        ) {
            let d = a.len().min(off.len());
            let a = &a[..d];
            let b: Vec<f64> = a.iter().zip(&off[..d]).map(|(x, o)| x + o).collect();
            let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
            let v1 = k_se(a, &b, 1.3, 0.9).unwrap();
            let v2 = k_se(&a2, &b2, 1.3, 0.9).unwrap();
            prop_assert!((v1 - v2).abs() < 1e-12 * (1.0 + v1.abs()));
        }

        /// k_se(x_p, x_q) ≤ k_se(x, x) = σ_f².
        #[test]
        fn k_se_bounded_by_signal_variance(
            a in proptest::collection::vec(-5.0f64..5.0, 1..4),
            off in proptest::collection::vec(-2.0f64..2.0, 1..4),
            sigma_f in 0.1f64..3.0,
        ) {
            let d = a.len().min(off.len());
            let a = &a[..d];
            let b: Vec<f64> = a.iter().zip(&off[..d]).map(|(x, o)| x + o).collect();
            let v = k_se(a, &b, sigma_f, 1.0).unwrap();
            prop_assert!(v > 0.0);
            prop_assert!(v <= sigma_f * sigma_f + 1e-15);
        }

        /// Bilinearity of the dot-product kernel in its first argument.
        #[test]
        fn k_bl_is_bilinear(
            a in proptest::collection::vec(-3.0f64..3.0, 1..4),
            b in proptest::collection::vec(-3.0f64..3.0, 1..4),
            alpha in -4.0f64..4.0,
        ) {
            let d = a.len().min(b.len());
            let (a, b) = (&a[..d], &b[..d]);
            let scaled: Vec<f64> = a.iter().map(|x| alpha * x).collect();
            let lhs = k_bl(&scaled, b, 1.7).unwrap();
            let rhs = alpha * k_bl(a, b, 1.7).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()));
        }
    }
}
