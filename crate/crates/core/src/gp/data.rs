use crate::error::{Error, Result};

/// An ordered series split into a training prefix and a test suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    times: Vec<f64>,
    values: Vec<f64>,
    n_train: usize,
}

impl TimeSeriesDataset {
    /// `n_train` leading points form the training set; the rest are test points.
    pub fn new(times: Vec<f64>, values: Vec<f64>, n_train: usize) -> Result<TimeSeriesDataset> {
        if times.len() != values.len() {
            return Err(Error::InvalidDataset(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if n_train < 1 || n_train > times.len() {
            return Err(Error::InvalidDataset(format!(
                "training size {n_train} outside 1..={}",
                times.len()
            )));
        }
        if let Some(i) = times.iter().chain(&values).position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("non-finite entry at position {i}")));
        }
        if let Some(i) = times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDataset(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(TimeSeriesDataset {
            times,
            values,
            n_train,
        })
    }

    /// Every point is a training point.
    pub fn train_only(times: Vec<f64>, values: Vec<f64>) -> Result<TimeSeriesDataset> {
        let n = times.len();
        TimeSeriesDataset::new(times, values, n)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_test(&self) -> usize {
        self.times.len() - self.n_train
    }

    pub fn train_times(&self) -> &[f64] {
        &self.times[..self.n_train]
    }

    pub fn train_values(&self) -> &[f64] {
        &self.values[..self.n_train]
    }

    pub fn test_times(&self) -> &[f64] {
        &self.times[self.n_train..]
    }

    pub fn test_values(&self) -> &[f64] {
        &self.values[self.n_train..]
    }

    /// `(first, last)` training time.
    pub fn train_range(&self) -> (f64, f64) {
        (self.times[0], self.times[self.n_train - 1])
    }

    /// Sample variance of the training values, floored away from zero.
    pub fn train_variance(&self) -> f64 {
        let y = self.train_values();
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var > 1e-12 {
            var
        } else {
            1.0
        }
    }

    /// Same points with the last `n_test` moved to the test suffix.
    pub fn with_test_count(&self, n_test: usize) -> Result<TimeSeriesDataset> {
        if n_test >= self.len() {
            return Err(Error::InvalidDataset(format!(
                "test size {n_test} leaves no training points out of {}",
                self.len()
            )));
        }
        TimeSeriesDataset::new(self.times.clone(), self.values.clone(), self.len() - n_test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_accessors() {
        let d = TimeSeriesDataset::new(vec![0.0, 1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0, 4.0], 3).unwrap();
        assert_eq!(d.train_times(), &[0.0, 1.0, 2.0]);
        assert_eq!(d.test_times(), &[3.0]);
        assert_eq!(d.n_test(), 1);
        assert_eq!(d.train_range(), (0.0, 2.0));
        assert_eq!(d.with_test_count(2).unwrap().n_train(), 2);
    }

    #[test]
    fn rejects_invalid_input() {
        assert!(TimeSeriesDataset::new(vec![0.0, 1.0], vec![1.0], 1).is_err());
        assert!(TimeSeriesDataset::new(vec![0.0, 0.0], vec![1.0, 1.0], 1).is_err());
        assert!(TimeSeriesDataset::new(vec![1.0, 0.0], vec![1.0, 1.0], 1).is_err());
        assert!(TimeSeriesDataset::new(vec![0.0, 1.0], vec![1.0, 1.0], 0).is_err());
        assert!(TimeSeriesDataset::new(vec![0.0, f64::NAN], vec![1.0, 1.0], 1).is_err());
        let d = TimeSeriesDataset::train_only(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(d.with_test_count(2).is_err());
    }
}
