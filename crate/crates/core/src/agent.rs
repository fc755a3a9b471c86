//! The training loop: epsilon-greedy Q-learning over the simulated market.
//!
//! Each iteration offers one bid to one customer, folds the bid into the
//! group averages, recomputes fairness, scores the outcome, and takes one
//! gradient step towards the TD target.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{ActionGrid, FairnessPartition, State, StateEncoder};
use crate::environment::{respond, sample_customer, Customer, GroupSpec, Population};
use crate::error::{Error, Result};
use crate::fairness::{rotated_jain, GroupAverages};
use crate::metrics::{cumulative_bid, expected_revenue, EpochStats, LearningRateMode, VisitCounter};
use crate::qnet::{td_target, train_step, Adam, AdamParams, QNet};
use crate::reward::{price_outcome, reward, RewardParams};

/// Exploration probability per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EpsilonSchedule {
    /// `exp(−t / scale)`.
    Exponential { scale: f64 },
    Constant { value: f64 },
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        EpsilonSchedule::Exponential { scale: 20.0 }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, epoch: usize) -> f64 {
        match *self {
            EpsilonSchedule::Exponential { scale } => epsilon(epoch, scale),
            EpsilonSchedule::Constant { value } => value,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            EpsilonSchedule::Exponential { scale } if !(scale.is_finite() && scale > 0.0) => {
                Err(Error::config("agent.epsilon.scale", "must be positive"))
            }
            EpsilonSchedule::Constant { value } if !(0.0..=1.0).contains(&value) => {
                Err(Error::config("agent.epsilon.value", "must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

/// `exp(−t / scale)`; the reference schedule uses `scale = 20`.
pub fn epsilon(t: usize, scale: f64) -> f64 {
    (-(t as f64) / scale).exp()
}

/// Which bids feed the per-group averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AverageMode {
    /// Every offered bid at its offered price.
    #[default]
    Offered,
    /// Only accepted bids.
    Accepted,
}

/// Which customer the next state describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NextStateMode {
    /// The customer drawn for the following iteration.
    #[default]
    NextCustomer,
    /// The current customer's group with the updated fairness.
    SameCustomer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub epochs: usize,
    pub bids: usize,
    /// Customers on the roster each epoch.
    pub customers: usize,
    /// Size of the portfolio the roster is drawn from.
    pub portfolio: usize,
    pub epsilon: EpsilonSchedule,
    pub gamma: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Half-width of the uniform weight initialization.
    pub init_scale: f64,
    /// When false the network is never updated.
    pub learn: bool,
    pub average_mode: AverageMode,
    pub next_state: NextStateMode,
    pub lr_mode: LearningRateMode,
    /// Keep one [`TransitionRecord`] per bid.
    pub record_transitions: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let adam = AdamParams::default();
        Self {
            epochs: 350,
            bids: 1000,
            customers: 100,
            portfolio: 10_000,
            epsilon: EpsilonSchedule::default(),
            gamma: 0.9,
            learning_rate: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            init_scale: 0.01,
            learn: true,
            average_mode: AverageMode::default(),
            next_state: NextStateMode::default(),
            lr_mode: LearningRateMode::default(),
            record_transitions: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("agent.epochs", "must be positive"));
        }
        if self.customers == 0 {
            return Err(Error::config("agent.customers", "must be positive"));
        }
        if self.portfolio < self.customers {
            return Err(Error::config("agent.portfolio", "must be at least the roster size"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("agent.gamma", "must lie in [0, 1)"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("agent.learning_rate", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::config("agent.beta1", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("agent.beta2", "must lie in [0, 1)"));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::config("agent.adam_eps", "must be positive"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::config("agent.init_scale", "must be non-negative"));
        }
        self.epsilon.validate()
    }

    pub fn adam_params(&self) -> AdamParams {
        AdamParams {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// One bid, as seen by the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub epoch: usize,
    /// 1-based within the epoch.
    pub iteration: usize,
    pub customer: usize,
    pub group: usize,
    /// Fairness the state was encoded from.
    pub state_fairness: f64,
    pub state_bin: usize,
    pub explored: bool,
    pub action: usize,
    pub bid: f64,
    pub accepted: bool,
    pub price: f64,
    /// Fairness after this bid's update.
    pub fairness: f64,
    pub reward: f64,
    pub target: f64,
    pub loss: f64,
}

/// Everything a run needs besides the agent settings.
#[derive(Debug, Clone)]
pub struct Market {
    pub groups: Vec<GroupSpec>,
    pub group_weights: Vec<f64>,
    pub grid: ActionGrid,
    pub partition: FairnessPartition,
    pub reward: RewardParams,
}

/// Picks a uniform random action with probability `eps`, the greedy one
/// otherwise. Returns the action and whether it explored.
pub fn select_action<R: Rng + ?Sized>(net: &QNet, state: &State, eps: f64, rng: &mut R) -> (usize, bool) {
    if rng.gen::<f64>() < eps {
        (rng.gen_range(0..net.actions()), true)
    } else {
        (net.greedy(state), false)
    }
}

/// A single seeded training run.
pub struct Simulation {
    config: AgentConfig,
    market: Market,
    population: Population,
    encoder: StateEncoder,
    net: QNet,
    adam: Adam,
    rng: ChaCha8Rng,
    visits: VisitCounter,
    averages: GroupAverages,
}

impl Simulation {
    pub fn new(config: AgentConfig, market: Market, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = StateEncoder::new(market.groups.len(), market.partition);
        let net = QNet::random(encoder.dim(), market.grid.len(), config.init_scale, &mut rng);
        let adam = Adam::new(config.adam_params(), &net);
        Self::assemble(config, market, net, adam, rng)
    }

    /// Continues from existing parameters, e.g. a loaded checkpoint.
    pub fn with_network(config: AgentConfig, market: Market, net: QNet, adam: Adam, seed: u64) -> Result<Self> {
        Self::assemble(config, market, net, adam, ChaCha8Rng::seed_from_u64(seed))
    }

    fn assemble(config: AgentConfig, market: Market, net: QNet, adam: Adam, rng: ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        market.reward.validate()?;
        let population = Population::new(
            market.groups.clone(),
            &market.group_weights,
            config.portfolio,
            config.customers,
        )?;
        let encoder = StateEncoder::new(market.groups.len(), market.partition);
        if net.inputs() != encoder.dim() || net.actions() != market.grid.len() {
            return Err(Error::config(
                "weights",
                format!(
                    "network is {}x{} but the config needs {}x{}",
                    net.actions(),
                    net.inputs(),
                    market.grid.len(),
                    encoder.dim()
                ),
            ));
        }
        let visits = VisitCounter::new(encoder.state_count(), market.grid.len());
        let averages = GroupAverages::new(market.groups.len());
        Ok(Self {
            config,
            market,
            population,
            encoder,
            net,
            adam,
            rng,
            visits,
            averages,
        })
    }

    pub fn net(&self) -> &QNet {
        &self.net
    }

    pub fn adam(&self) -> &Adam {
        &self.adam
    }

    pub fn averages(&self) -> &GroupAverages {
        &self.averages
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    /// Fairness values that fell outside `[0, 1]` and were clamped.
    pub fn clamped_fairness(&self) -> u64 {
        self.encoder.clamped()
    }

    fn next_customer(&mut self) -> Result<Customer> {
        sample_customer(&self.population, &mut self.rng)
    }

    /// Runs `bids` iterations at exploration rate `epsilon(epoch)`.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<(EpochStats, Vec<TransitionRecord>)> {
        let eps = self.config.epsilon.at(epoch);
        let a_max = self.market.grid.max();
        let penalty = self.market.reward.penalty;
        let gamma = self.config.gamma;

        self.averages.reset();
        self.visits.start_epoch();
        let mut log = Vec::new();
        let (mut rejects, mut fairness_sum, mut reward_sum) = (0u64, 0.0, 0.0);
        let mut prices = Vec::with_capacity(self.config.bids);

        if self.config.bids > 0 {
            self.population.redraw_roster(&mut self.rng);
        }
        let mut fairness = rotated_jain(self.averages.means(), a_max);
        let mut customer = if self.config.bids > 0 {
            Some(self.next_customer()?)
        } else {
            None
        };

        for iteration in 1..=self.config.bids {
            let current = customer.expect("customer drawn for every iteration");
            let state_fairness = fairness;
            let state = self.encoder.encode(current.group, fairness)?;
            let (action, explored) = select_action(&self.net, &state, eps, &mut self.rng);
            let bid = self.market.grid.price(action);
            let outcome = respond(bid, self.population.group(current.group), penalty, &mut self.rng);

            match self.config.average_mode {
                AverageMode::Offered => self.averages.update(current.group, bid)?,
                AverageMode::Accepted if outcome.accepted => self.averages.update(current.group, bid)?,
                AverageMode::Accepted => {}
            }
            fairness = rotated_jain(self.averages.means(), a_max);
            let p = price_outcome(bid, &outcome, a_max, penalty);
            let r = reward(p, fairness, &self.market.reward);

            let next = match self.config.next_state {
                NextStateMode::NextCustomer => self.next_customer()?,
                NextStateMode::SameCustomer => current,
            };
            let next_state = self.encoder.encode(next.group, fairness)?;
            let target = td_target(r, &next_state, &self.net, gamma, !outcome.accepted, penalty);

            let loss = if self.config.learn {
                train_step(&mut self.net, &mut self.adam, &state, action, target)
                    .map_err(|fault| Error::Training {
                        epoch,
                        iteration,
                        detail: format!(
                            "{fault}; group {} bin {} action {action} target {target} reward {r}",
                            state.group, state.bin
                        ),
                    })?
                    .loss
            } else {
                (target - self.net.q_value(&state, action)).powi(2)
            };

            self.visits.record(state.index(), action);
            if !outcome.accepted {
                rejects += 1;
            }
            prices.push(outcome.price);
            fairness_sum += fairness;
            reward_sum += r;

            if self.config.record_transitions {
                log.push(TransitionRecord {
                    epoch,
                    iteration,
                    customer: current.id,
                    group: current.group,
                    state_fairness,
                    state_bin: state.bin,
                    explored,
                    action,
                    bid,
                    accepted: outcome.accepted,
                    price: outcome.price,
                    fairness,
                    reward: r,
                    target,
                    loss,
                });
            }
            customer = Some(next);
        }

        let bids = self.config.bids as u64;
        let n = self.config.bids.max(1) as f64;
        let reject_ratio = if bids == 0 { 0.0 } else { rejects as f64 / n };
        let cum_bid = cumulative_bid(prices);
        let stats = EpochStats {
            epoch,
            epsilon: eps,
            bids,
            cum_bid,
            mean_fairness: if bids == 0 { 0.0 } else { fairness_sum / n },
            rejects,
            reject_ratio,
            expected_revenue: expected_revenue(cum_bid, reject_ratio),
            mean_reward: if bids == 0 { 0.0 } else { reward_sum / n },
            lr_metric: self.visits.metric(self.config.lr_mode),
            group_means: self.averages.means().to_vec(),
        };
        Ok((stats, log))
    }

    /// Runs every epoch, handing each epoch's transitions to `sink`.
    pub fn run(mut self, mut sink: impl FnMut(&[TransitionRecord]) -> Result<()>) -> Result<ExperimentResult> {
        let mut stats = Vec::with_capacity(self.config.epochs);
        for epoch in 0..self.config.epochs {
            let (s, log) = self.run_epoch(epoch)?;
            sink(&log)?;
            stats.push(s);
        }
        Ok(ExperimentResult {
            stats,
            clamped_fairness: self.encoder.clamped(),
            net: self.net,
            adam: self.adam,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub stats: Vec<EpochStats>,
    pub net: QNet,
    pub adam: Adam,
    pub clamped_fairness: u64,
}

/// Runs a full experiment without keeping transitions.
pub fn run_experiment(config: AgentConfig, market: Market, seed: u64) -> Result<ExperimentResult> {
    Simulation::new(config, market, seed)?.run(|_| Ok(()))
}
