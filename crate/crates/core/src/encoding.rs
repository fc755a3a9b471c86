//! Discretization of prices and fairness into the agent's action and state
//! spaces.
//!
//! A state is the concatenation of a group one-hot and a fairness-bin one-hot,
//! so every state vector has exactly two nonzero entries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Evenly spaced bid prices `min, min + q, ..., max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    min: f64,
    max: f64,
    step: f64,
    values: Vec<f64>,
}

impl ActionGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(Error::config("grid", "bounds and step must be finite"));
        }
        if max <= min {
            return Err(Error::config("grid.max", format!("max ({max}) must exceed min ({min})")));
        }
        if step <= 0.0 {
            return Err(Error::config("grid.step", "step must be positive"));
        }
        let intervals = (max - min) / step;
        let rounded = intervals.round();
        if (intervals - rounded).abs() > 1e-9 * rounded.max(1.0) {
            return Err(Error::config(
                "grid.step",
                format!("step {step} does not divide [{min}, {max}] evenly"),
            ));
        }
        let m = rounded as usize + 1;
        let mut values: Vec<f64> = (0..m).map(|i| min + i as f64 * step).collect();
        values[m - 1] = max;
        Ok(Self {
            min,
            max,
            step,
            values,
        })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn price(&self, index: usize) -> f64 {
        self.values[index]
    }
}

/// Index of the grid price closest to `price`; ties go to the lower index.
pub fn nearest_action(price: f64, grid: &ActionGrid) -> usize {
    let last = grid.len() - 1;
    if price <= grid.min {
        return 0;
    }
    if price >= grid.max {
        return last;
    }
    let guess = ((price - grid.min) / grid.step).floor() as usize;
    let lo = guess.min(last);
    let hi = (lo + 1).min(last);
    let dl = (price - grid.values[lo]).abs();
    let dh = (grid.values[hi] - price).abs();
    if dh < dl {
        hi
    } else {
        lo
    }
}

/// Partition of `[0, 1]` into bins of width `mesh`: `[k·p, (k+1)·p)`, with
/// the last bin closed at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessPartition {
    mesh: f64,
    bins: usize,
}

impl FairnessPartition {
    pub fn new(mesh: f64) -> Result<Self> {
        if !(mesh.is_finite() && mesh > 0.0 && mesh <= 1.0) {
            return Err(Error::config("partition.mesh", format!("mesh must lie in (0, 1], got {mesh}")));
        }
        let bins = (1.0 / mesh).round();
        if (1.0 / mesh - bins).abs() > 1e-6 {
            return Err(Error::config(
                "partition.mesh",
                format!("1/mesh must be an integer, got {}", 1.0 / mesh),
            ));
        }
        Ok(Self {
            mesh,
            bins: bins as usize,
        })
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

/// Bin holding `fairness`. Values outside `[0, 1]` are clamped.
pub fn bin_of(fairness: f64, partition: &FairnessPartition) -> usize {
    let f = if fairness.is_nan() { 0.0 } else { fairness.clamp(0.0, 1.0) };
    // Boundaries such as 0.29 with 100 bins land a hair below the integer in
    // floating point; the slack puts them in the bin they open.
    let k = (f * partition.bins as f64 + 1e-9).floor() as usize;
    k.min(partition.bins - 1)
}

/// Two-hot state: one customer group and one fairness bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub group: usize,
    pub bin: usize,
    pub groups: usize,
    pub bins: usize,
}

impl State {
    pub fn dim(&self) -> usize {
        self.groups + self.bins
    }

    /// Positions of the two active entries in the dense vector.
    pub fn active(&self) -> [usize; 2] {
        [self.group, self.groups + self.bin]
    }

    /// Flat index among all `groups × bins` states.
    pub fn index(&self) -> usize {
        self.group * self.bins + self.bin
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for i in self.active() {
            v[i] = 1.0;
        }
        v
    }
}

pub fn encode_state(group: usize, fairness: f64, groups: usize, partition: &FairnessPartition) -> Result<State> {
    if group >= groups {
        return Err(Error::config("group", format!("group {group} out of range (have {groups})")));
    }
    Ok(State {
        group,
        bin: bin_of(fairness, partition),
        groups,
        bins: partition.bins,
    })
}

/// State encoder that counts how often a fairness value had to be clamped.
#[derive(Debug, Clone)]
pub struct StateEncoder {
    groups: usize,
    partition: FairnessPartition,
    clamped: u64,
}

impl StateEncoder {
    pub fn new(groups: usize, partition: FairnessPartition) -> Self {
        Self {
            groups,
            partition,
            clamped: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.groups + self.partition.bins
    }

    pub fn state_count(&self) -> usize {
        self.groups * self.partition.bins
    }

    pub fn partition(&self) -> &FairnessPartition {
        &self.partition
    }

    pub fn clamped(&self) -> u64 {
        self.clamped
    }

    pub fn encode(&mut self, group: usize, fairness: f64) -> Result<State> {
        if !(0.0..=1.0).contains(&fairness) {
            self.clamped += 1;
        }
        encode_state(group, fairness, self.groups, &self.partition)
    }
}
