//! Q-learning with linear function approximation for dynamic pricing under a
//! group-fairness objective.
//!
//! The simulator offers prices (bids) to customers drawn from a small set of
//! groups, each with its own logistic acceptance curve. A linear Q-network
//! picks the bid from a discrete grid; the reward blends a Gaussian revenue
//! term with a Gaussian term on the rotated Jain's index of per-group average
//! prices.
//!
//! Module map:
//! - [`environment`]: customer groups, acceptance probability, responses
//! - [`fairness`]: Jain's index and its rotated variant over group averages
//! - [`encoding`]: action grid, fairness partition, two-hot state vectors
//! - [`qnet`]: linear Q approximator with an Adam optimizer
//! - [`reward`]: dual-objective reward
//! - [`agent`]: the epsilon-greedy training loop
//! - [`metrics`]: per-epoch statistics and CSV output
//! - [`runner`]: experiment configs, presets and multi-seed execution
//! - [`parallel`]: seed-level fan-out (rayon, or sequential without the
//!   `parallel` feature)

pub mod agent;
pub mod encoding;
pub mod environment;
pub mod error;
pub mod fairness;
pub mod metrics;
pub mod parallel;
pub mod qnet;
pub mod reward;
pub mod runner;

pub use error::{Error, Result};
