//! Jain's index over per-group average prices, and the rotated variant that
//! rewards low, homogeneous prices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running mean of bid prices per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAverages {
    means: Vec<f64>,
    counts: Vec<u64>,
}

impl GroupAverages {
    pub fn new(groups: usize) -> Self {
        Self {
            means: vec![0.0; groups],
            counts: vec![0; groups],
        }
    }

    pub fn from_parts(means: Vec<f64>, counts: Vec<u64>) -> Self {
        assert_eq!(means.len(), counts.len());
        Self { means, counts }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn reset(&mut self) {
        self.means.iter_mut().for_each(|m| *m = 0.0);
        self.counts.iter_mut().for_each(|c| *c = 0);
    }

    /// Folds `price` into the running mean of `group`.
    pub fn update(&mut self, group: usize, price: f64) -> Result<()> {
        if group >= self.means.len() {
            return Err(Error::config(
                "group",
                format!("group {group} out of range (have {})", self.means.len()),
            ));
        }
        self.counts[group] += 1;
        let n = self.counts[group] as f64;
        self.means[group] += (price - self.means[group]) / n;
        Ok(())
    }
}

/// `(Σx)² / (n·Σx²)`. An all-zero allocation is perfectly homogeneous and
/// scores 1.
pub fn jain_index(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let sum: f64 = values.iter().sum();
    let sum_sq: f64 = values.iter().map(|x| x * x).sum();
    if sum_sq == 0.0 {
        return 1.0;
    }
    sum * sum / (values.len() as f64 * sum_sq)
}

/// Jain's index of the headroom `a_max − ḡ` left under the highest price.
/// Means above `a_max` are clamped to it.
pub fn rotated_jain(means: &[f64], a_max: f64) -> f64 {
    debug_assert!(!means.is_empty());
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &m in means {
        let h = a_max - m.min(a_max);
        sum += h;
        sum_sq += h * h;
    }
    if sum_sq == 0.0 {
        return 1.0;
    }
    sum * sum / (means.len() as f64 * sum_sq)
}
