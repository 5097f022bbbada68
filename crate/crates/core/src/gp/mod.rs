//! Kernel evaluation and exact Gaussian-process inference.

mod bessel;
mod data;
mod kernel;
mod linalg;
mod optimize;
mod posterior;
mod sample;

pub use bessel::{bessel_i0, bessel_i0e, bessel_i0m1};
pub use data::TimeSeriesDataset;
pub use kernel::{eval, eval_base, eval_sigmoid, gram, window_weight};
pub use linalg::{cholesky, cholesky_scaled, CholeskyFactor, JITTER_LADDER};
pub use optimize::{optimize_hyperparams, FitResult, NoisePolicy, OptimizeConfig};
pub use posterior::{
    bic, bic_from_lml, log_marginal_likelihood, posterior, posterior_at, posterior_from_grams,
    PosteriorGaussian, NOISE_FLOOR,
};
pub use sample::{sample_moments, sample_mvn, sample_posterior};


