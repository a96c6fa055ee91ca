use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lcb::offer_from;
use super::{Policy, PolicyDecision, Turn};
use crate::assortment::{solve, AssortmentProblem};
use crate::error::Result;
use crate::estimator::{gradient, negative_log_likelihood};
use crate::model::{Offer, RoundFeatures};

const FIT_GRADIENT_TOL: f64 = 1e-6;
const FIT_MAX_ITERS: usize = 50_000;

/// `ceil(T^{2/3})`, computed in integers.
pub fn exploration_rounds(horizon: usize) -> usize {
    let target = (horizon as u128) * (horizon as u128);
    let mut m = (horizon as f64).powf(2.0 / 3.0).floor() as u128;
    while m > 0 && m * m * m >= target {
        m -= 1;
    }
    while m * m * m < target {
        m += 1;
    }
    m as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationPrices {
    /// Every explored arm is priced at 0, so nothing is ever censored.
    #[default]
    Zero,
    /// Prices drawn uniformly from `[0, 1]`.
    Uniform,
}

/// Explore-then-commit: random assortments for `ceil(T^{2/3})` rounds, one
/// batch maximum-likelihood fit, then greedy pricing and assortment.
pub struct EtcPolicy {
    k: usize,
    switch_round: usize,
    prices: ExplorationPrices,
    rng: ChaCha8Rng,
    history: Vec<(RoundFeatures, Offer, usize)>,
    theta_hat: Option<DVector<f64>>,
    fit_converged: bool,
    exploring: bool,
    turn: Turn,
}

impl EtcPolicy {
    pub fn new(k: usize, horizon: usize, prices: ExplorationPrices, rng: ChaCha8Rng) -> Self {
        Self {
            k,
            switch_round: exploration_rounds(horizon),
            prices,
            rng,
            history: Vec::new(),
            theta_hat: None,
            fit_converged: true,
            exploring: true,
            turn: Turn::default(),
        }
    }

    pub fn switch_round(&self) -> usize {
        self.switch_round
    }

    pub fn theta_hat(&self) -> Option<&DVector<f64>> {
        self.theta_hat.as_ref()
    }

    fn total_loss(&self, theta: &DVector<f64>) -> Result<f64> {
        self.history.iter().map(|(f, o, y)| negative_log_likelihood(theta, o, f, *y)).sum()
    }

    fn total_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = DVector::zeros(theta.len());
        for (f, o, y) in &self.history {
            g += gradient(theta, o, f, *y)?;
        }
        Ok(g)
    }

    /// Gradient descent with Armijo backtracking from the origin.
    fn fit(&mut self, dim: usize) -> Result<()> {
        let mut theta = DVector::zeros(2 * dim);
        let mut loss = self.total_loss(&theta)?;
        let mut step = 1.0;
        let mut converged = false;
        for _ in 0..FIT_MAX_ITERS {
            let g = self.total_gradient(&theta)?;
            let gnorm2 = g.norm_squared();
            if gnorm2.sqrt() < FIT_GRADIENT_TOL {
                converged = true;
                break;
            }
            step *= 2.0;
            loop {
                let candidate = &theta - step * &g;
                let cand_loss = self.total_loss(&candidate)?;
                if cand_loss <= loss - 0.5 * step * gnorm2 {
                    theta = candidate;
                    loss = cand_loss;
                    break;
                }
                step *= 0.5;
                if step < 1e-16 {
                    break;
                }
            }
            if step < 1e-16 {
                break;
            }
        }
        self.fit_converged = converged;
        self.theta_hat = Some(theta);
        Ok(())
    }
}

impl Policy for EtcPolicy {
    fn name(&self) -> &'static str {
        "etc"
    }

    fn act(&mut self, t: usize, features: &RoundFeatures) -> Result<PolicyDecision> {
        self.turn.begin(self.name())?;
        let n = features.n_arms();
        self.exploring = t <= self.switch_round;
        if self.exploring {
            let mut arms = rand::seq::index::sample(&mut self.rng, n, self.k.min(n)).into_vec();
            arms.sort_unstable();
            let prices = match self.prices {
                ExplorationPrices::Zero => vec![0.0; arms.len()],
                ExplorationPrices::Uniform => arms.iter().map(|_| self.rng.random::<f64>()).collect(),
            };
            return Ok(PolicyDecision { offer: Offer { arms, prices }, ..Default::default() });
        }

        if self.theta_hat.is_none() {
            self.fit(features.dim())?;
            self.history = Vec::new();
        }
        let theta = self.theta_hat.as_ref().expect("fitted above");
        let d = features.dim();
        let theta_v = theta.rows(0, d);
        let prices: Vec<f64> = features.x.iter().map(|x| x.dot(&theta_v).max(0.0)).collect();
        let utilities: Vec<f64> = (0..n).map(|i| features.utility(i, prices[i], theta)).collect();
        let solution = solve(&AssortmentProblem::new(prices.clone(), utilities.clone(), self.k)?);
        Ok(PolicyDecision {
            offer: offer_from(solution.set, &prices),
            lcb_v: Vec::new(),
            reward_index: prices,
            utility_index: utilities,
            tau_at_decision: 0,
        })
    }

    fn observe(&mut self, features: &RoundFeatures, offer: &Offer, chosen: usize) -> Result<()> {
        self.turn.end(self.name())?;
        if self.exploring {
            self.history.push((features.clone(), offer.clone(), chosen));
        }
        Ok(())
    }

    fn warning(&self) -> Option<String> {
        (!self.fit_converged).then(|| "etc: batch fit stopped before reaching the gradient tolerance".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{choice_probabilities, generate_instance, sample_choice};
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn switch_round_arithmetic() {
        assert_eq!(exploration_rounds(2000), 159);
        assert_eq!(exploration_rounds(1000), 100);
        assert_eq!(exploration_rounds(8), 4);
        assert_eq!(exploration_rounds(1), 1);
    }

    #[test]
    fn explores_with_free_prices_then_commits() {
        let inst = generate_instance(6, 3, 3).unwrap();
        let horizon = 200;
        let mut policy = EtcPolicy::new(3, horizon, ExplorationPrices::Zero, stream_rng(3, Stream::Policy));
        let switch = policy.switch_round();
        let mut user = stream_rng(3, Stream::User);
        for (t, f) in inst.feature_stream().take(horizon).enumerate() {
            let t = t + 1;
            let d = policy.act(t, &f).unwrap();
            if t <= switch {
                assert_eq!(d.offer.len(), 3);
                assert!(d.offer.prices.iter().all(|p| *p == 0.0));
            }
            let dist = choice_probabilities(&f, &inst.theta, &d.offer, None).unwrap();
            policy.observe(&f, &d.offer, sample_choice(&dist, &mut user)).unwrap();
        }
        assert!(policy.theta_hat().is_some());
        assert!(policy.warning().is_none());
    }
}
