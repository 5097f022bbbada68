use nalgebra::{DMatrix, DVector};

use super::data::TimeSeriesDataset;
use super::kernel::gram;
use super::linalg::{cholesky, cholesky_scaled, symmetrize, CholeskyFactor};
use crate::dsl::KernelExpr;
use crate::error::{Error, Result};

/// Smallest observation-noise variance the engine works with.
pub const NOISE_FLOOR: f64 = 1e-8;

/// Gaussian over the test outputs given the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGaussian {
    pub mean: DVector<f64>,
    /// Latent (noise-free) posterior covariance.
    pub covariance: DMatrix<f64>,
    /// Lower-triangular with `chol cholᵀ = covariance + jitter · I`.
    pub chol: DMatrix<f64>,
    /// Diagonal jitter that made `covariance` factorizable.
    pub jitter: f64,
    /// Jitter added to `K(X, X) + noise · I` before its solve.
    pub train_jitter: f64,
    /// Observation noise the posterior was conditioned with.
    pub noise_variance: f64,
}

impl PosteriorGaussian {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Marginal standard deviations, optionally including observation noise.
    pub fn marginal_std(&self, include_noise: bool) -> DVector<f64> {
        let extra = if include_noise {
            self.noise_variance
        } else {
            0.0
        };
        self.covariance
            .diagonal()
            .map(|v| (v.max(0.0) + extra).sqrt())
    }
}

/// Conditioning on precomputed Gram blocks.
///
/// `kxx = K(X, X)`, `kxs = K(X, X*)`, `kss = K(X*, X*)`. The mean is
/// `kxsᵀ (kxx + noise I)⁻¹ y` and the covariance
/// `kss - kxsᵀ (kxx + noise I)⁻¹ kxs`, both through triangular solves.
pub fn posterior_from_grams(
    kxx: &DMatrix<f64>,
    kxs: &DMatrix<f64>,
    kss: &DMatrix<f64>,
    y: &DVector<f64>,
    noise_variance: f64,
) -> Result<PosteriorGaussian> {
    let mut a = kxx.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += noise_variance;
    }
    let train = cholesky(&a)?;
    let v = train.solve_lower(kxs);
    let alpha_half = train.solve_lower_vec(y);
    let mean = v.transpose() * alpha_half;
    let covariance = symmetrize(&(kss - v.transpose() * &v));
    // the covariance can cancel to ~0 (noiseless interpolation), so the
    // jitter is measured against the prior variance
    let prior_scale = kss.diagonal().mean().max(covariance.diagonal().mean());
    let post = cholesky_scaled(&covariance, prior_scale)?;
    Ok(PosteriorGaussian {
        mean,
        covariance,
        chol: post.l,
        jitter: post.jitter,
        train_jitter: train.jitter,
        noise_variance,
    })
}

/// Posterior at arbitrary test inputs.
pub fn posterior_at(
    expr: &KernelExpr,
    train_x: &[f64],
    train_y: &[f64],
    test_x: &[f64],
    noise_variance: f64,
) -> Result<PosteriorGaussian> {
    if train_x.is_empty() || test_x.is_empty() {
        return Err(Error::InvalidDataset(
            "posterior needs at least one training and one test point".into(),
        ));
    }
    let kxx = gram(expr, train_x, train_x);
    let kxs = gram(expr, train_x, test_x);
    let kss = gram(expr, test_x, test_x);
    let y = DVector::from_column_slice(train_y);
    posterior_from_grams(&kxx, &kxs, &kss, &y, noise_variance)
}

/// Posterior over the dataset's test suffix.
pub fn posterior(
    expr: &KernelExpr,
    data: &TimeSeriesDataset,
    noise_variance: f64,
) -> Result<PosteriorGaussian> {
    if data.n_test() == 0 {
        return Err(Error::InvalidDataset("dataset has no test points".into()));
    }
    posterior_at(
        expr,
        data.train_times(),
        data.train_values(),
        data.test_times(),
        noise_variance,
    )
}

/// Factor of `K(X, X) + noise I` for the training prefix.
pub(crate) fn train_factor(
    expr: &KernelExpr,
    data: &TimeSeriesDataset,
    noise_variance: f64,
) -> Result<CholeskyFactor> {
    let x = data.train_times();
    let mut k = gram(expr, x, x);
    for i in 0..k.nrows() {
        k[(i, i)] += noise_variance;
    }
    cholesky(&k)
}

/// `log N(y | 0, K(X, X) + noise I)` over the training prefix.
pub fn log_marginal_likelihood(
    expr: &KernelExpr,
    data: &TimeSeriesDataset,
    noise_variance: f64,
) -> Result<f64> {
    let f = train_factor(expr, data, noise_variance)?;
    let y = DVector::from_column_slice(data.train_values());
    let half = f.solve_lower_vec(&y);
    let n = y.len() as f64;
    Ok(-0.5 * half.norm_squared()
        - f.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
        - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
}

/// `-2 lml + p ln(n)` with `p` the number of free parameters.
pub fn bic_from_lml(lml: f64, n_params: usize, n_train: usize) -> f64 {
    -2.0 * lml + n_params as f64 * (n_train as f64).ln()
}

/// BIC counting every kernel hyperparameter plus the noise variance.
pub fn bic(expr: &KernelExpr, data: &TimeSeriesDataset, noise_variance: f64) -> Result<f64> {
    let lml = log_marginal_likelihood(expr, data, noise_variance)?;
    Ok(bic_from_lml(lml, expr.num_hyperparams() + 1, data.n_train()))
}
