//! Clairvoyant assortment and pricing under the censored MNL.
//!
//! Pricing arm `i` at `p <= v_i` gives weight `w_i(p) = e^{v_i - alpha_i p}`.
//! A revenue level `R` is achievable iff `max sum_{i in S} w_i(p_i)(p_i - R) >= R`,
//! and for fixed `R` the inner maximisation separates per arm with maximiser
//! `p_i(R) = min(v_i, R + 1/alpha_i)` (the stationarity condition
//! `1 - alpha_i (p_i - R) = 0`, clipped at the censoring threshold). The optimal
//! revenue is the root of the resulting strictly decreasing gap function.

use nalgebra::DVector;

use super::{Policy, PolicyDecision, Turn};
use crate::assortment::{for_each_subset, BRUTE_FORCE_MAX_ARMS};
use crate::error::{Error, Result};
use crate::model::{expected_revenue, Offer, RoundFeatures, Theta};

pub const DEFAULT_GRID: usize = 200;
const LEVEL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
struct Arm {
    v: f64,
    alpha: f64,
}

impl Arm {
    fn weight(&self, p: f64) -> f64 {
        (self.v - self.alpha * p).exp()
    }

    /// Revenue-maximising price at level `level`.
    fn kkt_price(&self, level: f64) -> f64 {
        if self.alpha <= 0.0 {
            self.v
        } else {
            self.v.min(level + 1.0 / self.alpha).max(0.0)
        }
    }

    fn kkt_gain(&self, level: f64) -> f64 {
        let p = self.kkt_price(level);
        self.weight(p) * (p - level)
    }

    fn grid_price(&self, level: f64, grid: usize) -> f64 {
        let steps = grid.max(2) - 1;
        (0..=steps)
            .map(|j| self.v * j as f64 / steps as f64)
            .max_by(|a, b| (self.weight(*a) * (a - level)).total_cmp(&(self.weight(*b) * (b - level))))
            .unwrap_or(0.0)
    }

    fn grid_gain(&self, level: f64, grid: usize) -> f64 {
        let p = self.grid_price(level, grid);
        self.weight(p) * (p - level)
    }
}

fn arms_of(features: &RoundFeatures, theta: &Theta) -> Vec<Option<Arm>> {
    (0..features.n_arms())
        .map(|i| {
            let v = features.valuation(i, theta);
            // A negative valuation censors the arm at every nonnegative price.
            (v >= 0.0).then(|| Arm { v, alpha: features.sensitivity(i, theta) })
        })
        .collect()
}

/// Root of a strictly decreasing `gap` on `[0, hi]` with `gap(0) >= 0`.
fn bisect_level(hi: f64, gap: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, hi.max(0.0));
    if gap(hi) >= 0.0 {
        return hi;
    }
    while hi - lo > LEVEL_TOL * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if gap(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn revenue_of(arms: &[Arm], prices: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 1.0;
    for (a, p) in arms.iter().zip(prices) {
        let w = a.weight(*p);
        num += p * w;
        den += w;
    }
    num / den
}

/// Optimal prices for a fixed set (every arm kept active) and their revenue.
fn kkt_prices_for_set(arms: &[Arm]) -> (Vec<f64>, f64) {
    let hi = arms.iter().map(|a| a.v).fold(0.0, f64::max);
    let level = bisect_level(hi, |r| arms.iter().map(|a| a.kkt_gain(r)).sum::<f64>() - r);
    let prices: Vec<f64> = arms.iter().map(|a| a.kkt_price(level)).collect();
    let value = revenue_of(arms, &prices);
    (prices, value)
}

/// Best prices for a fixed set when each price is restricted to a `grid`-point mesh of `[0, v_i]`.
fn grid_prices_for_set(arms: &[Arm], grid: usize) -> (Vec<f64>, f64) {
    let hi = arms.iter().map(|a| a.v).fold(0.0, f64::max);
    let level = bisect_level(hi, |r| arms.iter().map(|a| a.grid_gain(r, grid)).sum::<f64>() - r);
    let prices: Vec<f64> = arms.iter().map(|a| a.grid_price(level, grid)).collect();
    let value = revenue_of(arms, &prices);
    (prices, value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecision {
    pub offer: Offer,
    pub value: f64,
}

/// Exhaustive oracle: every set of size at most `K`, each priced by the KKT
/// fixed point and by a per-arm grid search, keeping the better of the two.
pub fn oracle_decision(features: &RoundFeatures, theta: &Theta, k: usize, grid: usize) -> Result<OracleDecision> {
    let n = features.n_arms();
    if n > BRUTE_FORCE_MAX_ARMS {
        return Err(Error::TooLarge(format!(
            "oracle enumeration supports at most {BRUTE_FORCE_MAX_ARMS} arms, got {n}"
        )));
    }
    let arms = arms_of(features, theta);
    let mut best = OracleDecision { offer: Offer::empty(), value: 0.0 };
    let mut members = Vec::new();
    for_each_subset(n, k, |set| {
        if set.is_empty() || set.iter().any(|&i| arms[i].is_none()) {
            return;
        }
        members.clear();
        members.extend(set.iter().map(|&i| arms[i].expect("checked above")));
        let (kkt_prices, kkt_value) = kkt_prices_for_set(&members);
        let (grid_prices, grid_value) = grid_prices_for_set(&members, grid);
        let (prices, value) = if grid_value > kkt_value { (grid_prices, grid_value) } else { (kkt_prices, kkt_value) };
        if value > best.value {
            best = OracleDecision { offer: Offer { arms: set.to_vec(), prices }, value };
        }
    });
    Ok(best)
}

/// KKT-only revenue of the best pricing for a fixed set.
pub fn kkt_set_value(features: &RoundFeatures, theta: &Theta, set: &[usize]) -> Option<(Vec<f64>, f64)> {
    let arms = arms_of(features, theta);
    let members: Option<Vec<Arm>> = set.iter().map(|&i| arms[i]).collect();
    members.map(|m| kkt_prices_for_set(&m))
}

/// Exact oracle in `O(N log N)` per bisection step: at level `R` each arm
/// contributes `max_p w_i(p)(p - R)`, and the `K` largest positive contributions
/// are kept.
pub fn threshold_oracle(features: &RoundFeatures, theta: &Theta, k: usize) -> Result<OracleDecision> {
    let arms = arms_of(features, theta);
    let top = |level: f64| -> Vec<(usize, f64)> {
        let mut gains: Vec<(usize, f64)> = arms
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map(|a| (i, a.kkt_gain(level))))
            .filter(|&(_, g)| g > 0.0)
            .collect();
        gains.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        gains.truncate(k);
        gains
    };
    let hi = arms.iter().flatten().map(|a| a.v).fold(0.0, f64::max);
    if hi <= 0.0 || k == 0 {
        return Ok(OracleDecision { offer: Offer::empty(), value: 0.0 });
    }
    let level = bisect_level(hi, |r| top(r).iter().map(|g| g.1).sum::<f64>() - r);
    let mut chosen = top(level);
    chosen.sort_by_key(|g| g.0);
    let set: Vec<usize> = chosen.iter().map(|g| g.0).collect();
    let prices = set.iter().map(|&i| arms[i].expect("filtered").kkt_price(level)).collect();
    let offer = Offer { arms: set, prices };
    let value = expected_revenue(features, theta, &offer, None)?;
    Ok(OracleDecision { offer, value })
}

/// Plays the clairvoyant decision every round.
pub struct OraclePolicy {
    theta: Theta,
    k: usize,
    turn: Turn,
}

impl OraclePolicy {
    pub fn new(theta: Theta, k: usize) -> Self {
        Self { theta, k, turn: Turn::default() }
    }
}

impl Policy for OraclePolicy {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn act(&mut self, _t: usize, features: &RoundFeatures) -> Result<PolicyDecision> {
        self.turn.begin(self.name())?;
        let decision = threshold_oracle(features, &self.theta, self.k)?;
        let valuations: Vec<f64> = (0..features.n_arms()).map(|i| features.valuation(i, &self.theta)).collect();
        let stacked: DVector<f64> = self.theta.stacked();
        let utilities = (0..features.n_arms())
            .map(|i| {
                let p = decision.offer.arms.iter().position(|&a| a == i).map_or(0.0, |k| decision.offer.prices[k]);
                features.utility(i, p, &stacked)
            })
            .collect();
        Ok(PolicyDecision {
            offer: decision.offer,
            lcb_v: valuations.clone(),
            reward_index: valuations,
            utility_index: utilities,
            tau_at_decision: 0,
        })
    }

    fn observe(&mut self, _features: &RoundFeatures, _offer: &Offer, _chosen: usize) -> Result<()> {
        self.turn.end(self.name())
    }
}
