use serde::{Deserialize, Serialize};

/// Streaming mean and variance (Welford), mergeable across workers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningStat {
    count: u64,
    mean: f64,
    m2: f64,
}

/// Lower bound on the standard deviation used for normalization.
pub const STD_FLOOR: f64 = 1e-8;

impl RunningStat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance; 0 until two observations have been seen.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn update(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// `(x - mean) / max(std, 1e-8)`; identity while fewer than two
    /// observations have been recorded.
    pub fn normalize(&self, x: f64) -> f64 {
        if self.count < 2 {
            x
        } else {
            (x - self.mean) / self.std().max(STD_FLOOR)
        }
    }

    pub fn update_and_normalize(&mut self, x: f64) -> f64 {
        self.update(x);
        self.normalize(x)
    }

    /// Combines two summaries as if all observations had been seen by one.
    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let count = self.count + other.count;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.count as f64 / count as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.count as f64 * other.count as f64) / count as f64;
        Self { count, mean, m2 }
    }
}
