//! Small statistics helpers: running moments, batch-means standard errors,
//! normal-approximation confidence intervals.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub struct Running {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero with fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }

    /// Half-width of the 95% normal-approximation interval for the mean.
    pub fn ci95(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        Z95 * self.std_error()
    }
}

impl FromIterator<f64> for Running {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut r = Running::new();
        for x in iter {
            r.push(x);
        }
        r
    }
}

/// Mean of a correlated series with a batch-means standard error.
///
/// The series is cut into `batches` contiguous batches; the standard error is
/// the spread of batch means over `sqrt(batches)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Streaming batch-means accumulator for a series of known length.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_len: u64,
    in_batch: u64,
    batch_sum: f64,
    total: Running,
    batches: Running,
}

impl BatchMeans {
    pub fn new(series_len: u64, batches: u64) -> Self {
        let batches = batches.max(2);
        Self {
            batch_len: (series_len / batches).max(1),
            in_batch: 0,
            batch_sum: 0.0,
            total: Running::new(),
            batches: Running::new(),
        }
    }

    pub fn push(&mut self, x: f64) {
        self.total.push(x);
        self.batch_sum += x;
        self.in_batch += 1;
        if self.in_batch == self.batch_len {
            self.batches.push(self.batch_sum / self.batch_len as f64);
            self.batch_sum = 0.0;
            self.in_batch = 0;
        }
    }

    pub fn estimate(&self) -> BatchEstimate {
        BatchEstimate {
            mean: self.total.mean(),
            std_error: self.batches.std_error(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_matches_two_pass() {
        let xs = [1.0, 4.0, 4.0, 9.0, 2.5];
        let r: Running = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((r.mean() - mean).abs() < 1e-12);
        assert!((r.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn batch_means_of_constant_has_zero_error() {
        let mut b = BatchMeans::new(1000, 10);
        for _ in 0..1000 {
            b.push(3.0);
        }
        let e = b.estimate();
        assert_eq!(e.mean, 3.0);
        assert_eq!(e.std_error, 0.0);
    }
}
