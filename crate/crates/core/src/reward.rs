//! Gaussian revenue/fairness reward.

use serde::{Deserialize, Serialize};

use crate::environment::BidOutcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardParams {
    pub beta_price: f64,
    pub sigma_price: f64,
    /// Target normalized price in `[0, 1]`.
    pub target_price: f64,
    pub beta_fairness: f64,
    pub sigma_fairness: f64,
    pub target_fairness: f64,
    /// Normalized price assigned to a rejected bid.
    pub penalty: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            beta_price: 1.0,
            sigma_price: 0.1,
            target_price: 1.0,
            beta_fairness: 1.0,
            sigma_fairness: 0.1,
            target_fairness: 1.0,
            penalty: -0.5,
        }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("beta_price", self.beta_price),
            ("sigma_price", self.sigma_price),
            ("target_price", self.target_price),
            ("beta_fairness", self.beta_fairness),
            ("sigma_fairness", self.sigma_fairness),
            ("target_fairness", self.target_fairness),
            ("penalty", self.penalty),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::config(format!("reward.{name}"), "must be finite"));
            }
        }
        if self.sigma_price <= 0.0 {
            return Err(Error::config("reward.sigma_price", "must be positive"));
        }
        if self.sigma_fairness <= 0.0 {
            return Err(Error::config("reward.sigma_fairness", "must be positive"));
        }
        if self.beta_price < 0.0 {
            return Err(Error::config("reward.beta_price", "must be non-negative"));
        }
        if self.beta_fairness < 0.0 {
            return Err(Error::config("reward.beta_fairness", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.target_price) {
            return Err(Error::config("reward.target_price", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.target_fairness) {
            return Err(Error::config("reward.target_fairness", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// `β_p·exp(−(p−p_t)²/σ_p) + β_f·exp(−(f−f_t)²/σ_f)`, divided by `β_p + β_f`
/// so it lies in `[0, 1]`. With both weights zero the reward is 0.
pub fn reward(price: f64, fairness: f64, params: &RewardParams) -> f64 {
    let total = params.beta_price + params.beta_fairness;
    if total == 0.0 {
        return 0.0;
    }
    let dp = price - params.target_price;
    let df = fairness - params.target_fairness;
    let revenue = params.beta_price * (-dp * dp / params.sigma_price).exp();
    let fair = params.beta_fairness * (-df * df / params.sigma_fairness).exp();
    (revenue + fair) / total
}

/// Normalized price fed to the reward: `bid / a_max` when accepted, the
/// penalty otherwise.
pub fn price_outcome(bid: f64, outcome: &BidOutcome, a_max: f64, penalty: f64) -> f64 {
    if outcome.accepted {
        bid / a_max
    } else {
        penalty
    }
}
