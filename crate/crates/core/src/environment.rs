//! Synthetic customer market.
//!
//! Every customer belongs to one group. A group answers a bid `a` with
//! acceptance probability `1 / (1 + exp(-(b + w·a)))`; customers carry no
//! state beyond their group.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic price sensitivity of one customer group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub id: usize,
    /// Logistic intercept.
    pub b: f64,
    /// Logistic slope per price unit.
    pub w: f64,
}

impl GroupSpec {
    pub const fn new(id: usize, b: f64, w: f64) -> Self {
        Self { id, b, w }
    }

    /// The four reference groups: two price-sensitive groups with different
    /// reservation prices, one whose acceptance grows with price, and one that
    /// ignores price entirely.
    pub fn reference_groups() -> Vec<GroupSpec> {
        vec![
            GroupSpec::new(0, 18.229, -2.369),
            GroupSpec::new(1, 4.4757, -1.1526),
            GroupSpec::new(2, -1.09195, 0.34),
            GroupSpec::new(3, 0.0, 0.0),
        ]
    }
}

/// Probability that a customer of group `g` accepts bid `a`.
pub fn acceptance_probability(a: f64, g: &GroupSpec) -> f64 {
    1.0 / (1.0 + (-(g.b + g.w * a)).exp())
}

/// Result of offering one bid to one customer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidOutcome {
    pub accepted: bool,
    /// The bid when accepted, the rejection penalty otherwise.
    pub price: f64,
    pub group: usize,
}

/// Draws one Bernoulli response to bid `a`. A rejected bid is priced at
/// `penalty`.
pub fn respond<R: Rng + ?Sized>(a: f64, g: &GroupSpec, penalty: f64, rng: &mut R) -> BidOutcome {
    let phi = acceptance_probability(a, g);
    let accepted = rng.gen::<f64>() < phi;
    BidOutcome {
        accepted,
        price: if accepted { a } else { penalty },
        group: g.id,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Customer {
    pub id: usize,
    pub group: usize,
}

/// The customer portfolio plus the roster of customers active in the
/// current epoch.
#[derive(Debug, Clone)]
pub struct Population {
    groups: Vec<GroupSpec>,
    portfolio: Vec<Customer>,
    roster: Vec<Customer>,
    roster_size: usize,
}

impl Population {
    /// Builds a portfolio of `portfolio_size` customers split across `groups`
    /// in proportion to `weights` (largest-remainder rounding). The active
    /// roster starts as the first `roster_size` portfolio entries; call
    /// [`Population::redraw_roster`] to sample a fresh one.
    pub fn new(
        groups: Vec<GroupSpec>,
        weights: &[f64],
        portfolio_size: usize,
        roster_size: usize,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::config("groups", "at least one group is required"));
        }
        for (i, g) in groups.iter().enumerate() {
            if g.id != i {
                return Err(Error::config(
                    "groups",
                    format!("group ids must be 0..{} in order, found {} at {i}", groups.len(), g.id),
                ));
            }
            if !g.b.is_finite() || !g.w.is_finite() {
                return Err(Error::config("groups", format!("group {i} has non-finite b or w")));
            }
        }
        if weights.len() != groups.len() {
            return Err(Error::config(
                "group_weights",
                format!("expected {} weights, got {}", groups.len(), weights.len()),
            ));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::config("group_weights", "weights must be non-negative with a positive sum"));
        }
        if roster_size == 0 {
            return Err(Error::config("customers", "roster must hold at least one customer"));
        }
        if portfolio_size < roster_size {
            return Err(Error::config(
                "portfolio_size",
                format!("portfolio ({portfolio_size}) smaller than roster ({roster_size})"),
            ));
        }

        let counts = apportion(weights, portfolio_size);
        let mut portfolio = Vec::with_capacity(portfolio_size);
        // Interleave groups so any prefix of the portfolio is close to the
        // target mix.
        let mut remaining = counts.clone();
        while portfolio.len() < portfolio_size {
            for (group, left) in remaining.iter_mut().enumerate() {
                if *left > 0 {
                    *left -= 1;
                    portfolio.push(Customer { id: portfolio.len(), group });
                }
            }
        }
        let roster = portfolio[..roster_size].to_vec();
        Ok(Self {
            groups,
            portfolio,
            roster,
            roster_size,
        })
    }

    /// A single-roster population with no portfolio beyond the roster itself.
    pub fn from_customers(groups: Vec<GroupSpec>, customers: Vec<Customer>) -> Result<Self> {
        if customers.is_empty() {
            return Err(Error::config("customers", "roster is empty"));
        }
        if let Some(c) = customers.iter().find(|c| c.group >= groups.len()) {
            return Err(Error::config(
                "customers",
                format!("customer {} references unknown group {}", c.id, c.group),
            ));
        }
        let n = customers.len();
        Ok(Self {
            groups,
            portfolio: customers.clone(),
            roster: customers,
            roster_size: n,
        })
    }

    pub fn groups(&self) -> &[GroupSpec] {
        &self.groups
    }

    pub fn group(&self, id: usize) -> &GroupSpec {
        &self.groups[id]
    }

    pub fn roster(&self) -> &[Customer] {
        &self.roster
    }

    /// Replaces the roster with `roster_size` customers drawn from the
    /// portfolio without replacement.
    pub fn redraw_roster<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let picks = index::sample(rng, self.portfolio.len(), self.roster_size);
        self.roster.clear();
        self.roster.extend(picks.iter().map(|i| self.portfolio[i]));
    }
}

/// Uniform draw from the active roster.
pub fn sample_customer<R: Rng + ?Sized>(pop: &Population, rng: &mut R) -> Result<Customer> {
    if pop.roster.is_empty() {
        return Err(Error::config("customers", "cannot sample from an empty roster"));
    }
    Ok(pop.roster[rng.gen_range(0..pop.roster.len())])
}

fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut short = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if short == 0 {
            break;
        }
        counts[i] += 1;
        short -= 1;
    }
    counts
}
