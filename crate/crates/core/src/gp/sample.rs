use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::posterior::PosteriorGaussian;

/// `n_draws` samples of `mean + chol · z` with `z ~ N(0, I)`, one per row.
pub fn sample_mvn(mean: &DVector<f64>, chol: &DMatrix<f64>, n_draws: usize, seed: u64) -> DMatrix<f64> {
    let dim = mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n_draws, dim);
    let mut z = DVector::zeros(dim);
    for r in 0..n_draws {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let draw = mean + chol * &z;
        out.row_mut(r).copy_from(&draw.transpose());
    }
    out
}

/// Draws from the posterior, matrix of shape `n_draws × n*`.
pub fn sample_posterior(post: &PosteriorGaussian, n_draws: usize, seed: u64) -> DMatrix<f64> {
    sample_mvn(&post.mean, &post.chol, n_draws.max(1), seed)
}

/// Column means and (biased) covariance of row samples.
pub fn sample_moments(draws: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = draws.nrows() as f64;
    let mean = draws.row_mean().transpose();
    let mut centered = draws.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / n;
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_factor_returns_mean() {
        let mean = DVector::from_vec(vec![1.5, -2.0]);
        let draws = sample_mvn(&mean, &DMatrix::zeros(2, 2), 10, 4);
        for row in draws.row_iter() {
            assert_eq!(row.transpose(), mean);
        }
    }

    #[test]
    fn unit_normal_moments() {
        let draws = sample_mvn(&DVector::zeros(1), &DMatrix::identity(1, 1), 100_000, 11);
        let (m, c) = sample_moments(&draws);
        assert!(m[0].abs() < 0.02, "{}", m[0]);
        assert!((0.98..=1.02).contains(&c[(0, 0)]), "{}", c[(0, 0)]);
    }

    #[test]
    fn seeded_draws_repeat() {
        let mean = DVector::from_vec(vec![0.0, 1.0, 2.0]);
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.1, 0.2, 0.3]);
        assert_eq!(sample_mvn(&mean, &l, 50, 7), sample_mvn(&mean, &l, 50, 7));
        assert_ne!(sample_mvn(&mean, &l, 50, 7), sample_mvn(&mean, &l, 50, 8));
    }
}
