use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative diagonal jitter tried in order, as multiples of `mean(diag)`.
pub const JITTER_LADDER: [f64; 5] = [0.0, 1e-10, 1e-8, 1e-6, 1e-4];

/// Lower-triangular `l` with `l lᵀ = m + jitter · I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    pub l: DMatrix<f64>,
    /// Absolute jitter added to the diagonal.
    pub jitter: f64,
}

impl CholeskyFactor {
    /// Solve `l x = b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Solve `(l lᵀ) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let v = self.solve_lower_vec(b);
        self.l
            .tr_solve_lower_triangular(&v)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `log det(l lᵀ)`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Cholesky factorization with the smallest jitter from [`JITTER_LADDER`] that succeeds.
pub fn cholesky(m: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "cholesky needs a square matrix");
    if n == 0 {
        return Ok(CholeskyFactor {
            l: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    cholesky_scaled(m, m.diagonal().mean())
}

/// As [`cholesky`], with the ladder measured against `scale` instead of the
/// mean diagonal. Used when `m` can cancel to nearly zero.
pub fn cholesky_scaled(m: &DMatrix<f64>, scale: f64) -> Result<CholeskyFactor> {
    let n = m.nrows();
    if n == 0 {
        return Ok(CholeskyFactor {
            l: DMatrix::zeros(0, 0),
            jitter: 0.0,
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { size: n });
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    for rel in JITTER_LADDER {
        let jitter = rel * scale;
        let mut a = m.clone();
        for i in 0..n {
            a[(i, i)] += jitter;
        }
        if let Some(ch) = nalgebra::Cholesky::new(a) {
            let l = ch.unpack();
            if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
                return Ok(CholeskyFactor { l, jitter });
            }
        }
    }
    Err(Error::NotPositiveDefinite { size: n })
}

/// Average of `m` and `mᵀ`.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
