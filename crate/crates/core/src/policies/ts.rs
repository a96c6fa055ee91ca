use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::lcb::{lcb_pricing, offer_from};
use super::{Policy, PolicyDecision, Turn};
use crate::assortment::{solve, AssortmentProblem};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorState, HyperParams};
use crate::linalg::SpdFactor;
use crate::model::{Offer, RoundFeatures};

/// `M = ceil(1 - log(2N) / log(1 - 1/(4 sqrt(e pi))))`.
pub fn default_sample_count(n_arms: usize) -> usize {
    let anti = 1.0 / (4.0 * (std::f64::consts::E * std::f64::consts::PI).sqrt());
    (1.0 - (2.0 * n_arms as f64).ln() / (1.0 - anti).ln()).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsConfig {
    pub samples: usize,
    /// Multiplier on the valuation optimism term added to the utility index.
    pub utility_scale: f64,
}

impl TsConfig {
    /// `M` from the arm count and a utility scale of `8 C`.
    pub fn for_problem(hp: &HyperParams) -> Self {
        Self { samples: default_sample_count(hp.n), utility_scale: 8.0 * hp.c_trigger }
    }
}

/// Thompson-sampling assortment selection with LCB pricing.
pub struct TsPolicy {
    hp: HyperParams,
    cfg: TsConfig,
    est: EstimatorState,
    rng: ChaCha8Rng,
    turn: Turn,
}

impl TsPolicy {
    pub fn new(hp: HyperParams, cfg: TsConfig, rng: ChaCha8Rng) -> Result<Self> {
        let est = EstimatorState::new(&hp)?;
        Self::with_estimator(hp, cfg, est, rng)
    }

    pub fn with_estimator(hp: HyperParams, cfg: TsConfig, est: EstimatorState, rng: ChaCha8Rng) -> Result<Self> {
        if cfg.samples == 0 {
            return Err(Error::InvalidInput("TS needs at least one sample".into()));
        }
        Ok(Self { hp, cfg, est, rng, turn: Turn::default() })
    }
}

/// Draws from `N(mean, scale^2 A^{-1})` using the Cholesky factor of `A`.
pub(crate) fn gaussian_draw(mean: &DVector<f64>, scale: f64, factor: &SpdFactor, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let xi = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    mean + scale * factor.whiten_transpose(&xi)
}

impl Policy for TsPolicy {
    fn name(&self) -> &'static str {
        "tsa-lcbp"
    }

    fn act(&mut self, t: usize, features: &RoundFeatures) -> Result<PolicyDecision> {
        self.turn.begin(self.name())?;
        self.est.maybe_refresh_pricing_estimate(&self.hp, t);
        let beta = self.est.radius(&self.hp, t);
        let sqrt_c = self.hp.c_trigger.sqrt();
        let pricing = lcb_pricing(&self.est, features, beta, sqrt_c, 0.0);

        let theta_hat = self.est.theta_hat().clone();
        let theta_v_hat = self.est.theta_v_hat();
        let v_samples: Vec<DVector<f64>> = (0..self.cfg.samples)
            .map(|_| gaussian_draw(&theta_v_hat, beta, self.est.h_v_factor(), &mut self.rng))
            .collect();
        let full_samples: Vec<DVector<f64>> = (0..self.cfg.samples)
            .map(|_| gaussian_draw(&theta_hat, 2f64.sqrt() * beta, self.est.h_factor(), &mut self.rng))
            .collect();

        let n = features.n_arms();
        let mut ts_v = Vec::with_capacity(n);
        let mut ts_u = Vec::with_capacity(n);
        for i in 0..n {
            let x = &features.x[i];
            let v_tilde = v_samples.iter().map(|s| x.dot(s)).fold(f64::NEG_INFINITY, f64::max);
            let optimism = v_tilde - x.dot(&theta_v_hat);
            let p = pricing.prices[i];
            let u_tilde = full_samples.iter().map(|s| features.utility(i, p, s)).fold(f64::NEG_INFINITY, f64::max);
            ts_v.push(v_tilde);
            ts_u.push(u_tilde + self.cfg.utility_scale * optimism);
        }

        // Arms with a negative sampled valuation get zero reward and are never selected.
        let problem = AssortmentProblem::new(ts_v.iter().map(|v| v.max(0.0)).collect(), ts_u.clone(), self.hp.k)?;
        let solution = solve(&problem);
        Ok(PolicyDecision {
            offer: offer_from(solution.set, &pricing.prices),
            lcb_v: pricing.lcb,
            reward_index: ts_v,
            utility_index: ts_u,
            tau_at_decision: self.est.tau(),
        })
    }

    fn observe(&mut self, features: &RoundFeatures, offer: &Offer, chosen: usize) -> Result<()> {
        self.turn.end(self.name())?;
        self.est.observe(features, offer, chosen, &self.hp)
    }

    fn estimator(&self) -> Option<&EstimatorState> {
        Some(&self.est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_instance;
    use crate::rng::{stream_rng, Stream};
    use nalgebra::DMatrix;

    #[test]
    fn sample_count_formula() {
        assert_eq!(default_sample_count(10), 35);
        assert!(default_sample_count(20) > default_sample_count(10));
    }

    #[test]
    fn zero_radius_collapses_to_point_estimate() {
        let mut hp = HyperParams::new(3, 3, 6, 100);
        hp.c1 = 0.0;
        let inst = generate_instance(6, 3, 4).unwrap();
        let theta = inst.theta.stacked() * 0.5;
        let est = EstimatorState::pinned(&hp, theta.clone()).unwrap();
        let cfg = TsConfig { samples: 7, utility_scale: 123.0 };
        let mut policy = TsPolicy::with_estimator(hp, cfg, est, stream_rng(1, Stream::Policy)).unwrap();
        let f = inst.feature_stream().next().unwrap();
        let d = policy.act(1, &f).unwrap();
        for i in 0..6 {
            let v_hat = f.x[i].dot(&theta.rows(0, 3));
            assert!((d.reward_index[i] - v_hat).abs() < 1e-12);
            let u_hat = f.utility(i, d.lcb_v[i].max(0.0), &theta);
            assert!((d.utility_index[i] - u_hat).abs() < 1e-12);
        }
    }

    #[test]
    fn sampled_covariance_matches_design() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
        let factor = SpdFactor::new(&h).unwrap();
        let beta = 0.7;
        let mean = DVector::from_column_slice(&[0.1, -0.2, 0.3]);
        let mut rng = stream_rng(99, Stream::Policy);
        let n = 10_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| gaussian_draw(&mean, beta, &factor, &mut rng)).collect();
        let avg = draws.iter().fold(DVector::zeros(3), |a, d| a + d) / n as f64;
        let mut cov = DMatrix::zeros(3, 3);
        for d in &draws {
            let c = d - &avg;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let target = beta * beta * h.try_inverse().unwrap();
        assert!((&cov - &target).norm() / target.norm() < 0.05);
    }
}
