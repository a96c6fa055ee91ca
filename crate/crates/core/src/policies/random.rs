use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Policy, PolicyDecision, Turn};
use crate::error::Result;
use crate::model::{Offer, RoundFeatures};

/// Uniform random assortment of size `min(K, N)` with `U[0, 1]` prices.
pub struct RandomPolicy {
    k: usize,
    rng: ChaCha8Rng,
    turn: Turn,
}

impl RandomPolicy {
    pub fn new(k: usize, rng: ChaCha8Rng) -> Self {
        Self { k, rng, turn: Turn::default() }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &'static str {
        "random"
    }

    fn act(&mut self, _t: usize, features: &RoundFeatures) -> Result<PolicyDecision> {
        self.turn.begin(self.name())?;
        let n = features.n_arms();
        let mut arms = rand::seq::index::sample(&mut self.rng, n, self.k.min(n)).into_vec();
        arms.sort_unstable();
        let prices = arms.iter().map(|_| self.rng.random::<f64>()).collect();
        Ok(PolicyDecision { offer: Offer { arms, prices }, ..Default::default() })
    }

    fn observe(&mut self, _features: &RoundFeatures, _offer: &Offer, _chosen: usize) -> Result<()> {
        self.turn.end(self.name())
    }
}
