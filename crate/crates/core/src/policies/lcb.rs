use super::{Policy, PolicyDecision, Turn};
use crate::assortment::{solve, AssortmentProblem};
use crate::error::Result;
use crate::estimator::{gradient, EstimatorState, GradientFn, HyperParams};
use crate::model::{Offer, RoundFeatures};

/// How prices are derived from the valuation lower bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PricingRule {
    /// `p = (v_lcb)^+` with the configured trigger factor `C`.
    Lcb,
    /// `p = (v_lcb - c)^+` for noisy activation; the trigger factor is fixed to 2
    /// and the utility bound is inflated by `c`.
    ShiftedLcb { c: f64 },
}

impl PricingRule {
    fn shift(self) -> f64 {
        match self {
            PricingRule::Lcb => 0.0,
            PricingRule::ShiftedLcb { c } => c,
        }
    }

    fn trigger(self, hp: &HyperParams) -> f64 {
        match self {
            PricingRule::Lcb => hp.c_trigger,
            PricingRule::ShiftedLcb { .. } => 2.0,
        }
    }
}

pub(crate) struct LcbPricing {
    pub lcb: Vec<f64>,
    pub prices: Vec<f64>,
    /// `||x_i||_{H_v^{-1}}` per arm.
    pub x_norms: Vec<f64>,
}

/// `v_lcb_i = x_i^T theta_v,(tau) - sqrt(C) beta ||x_i||_{H_v^{-1}}`, priced at `(v_lcb_i - shift)^+`.
pub(crate) fn lcb_pricing(
    est: &EstimatorState,
    features: &RoundFeatures,
    beta: f64,
    sqrt_c: f64,
    shift: f64,
) -> LcbPricing {
    let n = features.n_arms();
    let mut out =
        LcbPricing { lcb: Vec::with_capacity(n), prices: Vec::with_capacity(n), x_norms: Vec::with_capacity(n) };
    for x in &features.x {
        let norm = est.h_v_factor().inv_norm(x);
        let lcb = x.dot(est.theta_v_frozen()) - sqrt_c * beta * norm;
        out.lcb.push(lcb);
        out.prices.push((lcb - shift).max(0.0));
        out.x_norms.push(norm);
    }
    out
}

pub(crate) fn offer_from(set: Vec<usize>, prices: &[f64]) -> Offer {
    let arm_prices = set.iter().map(|&i| prices[i]).collect();
    Offer { arms: set, prices: arm_prices }
}

/// UCB assortment selection with LCB pricing, and its shifted-price variant
/// for noisy activation thresholds.
pub struct LcbUcbPolicy {
    hp: HyperParams,
    rule: PricingRule,
    est: EstimatorState,
    turn: Turn,
    grad_fn: GradientFn,
}

impl LcbUcbPolicy {
    pub fn new(hp: HyperParams, rule: PricingRule) -> Result<Self> {
        let est = EstimatorState::new(&hp)?;
        Ok(Self::with_estimator(hp, rule, est))
    }

    /// Starts from a caller-built estimator, e.g. one pinned at the true parameter.
    pub fn with_estimator(hp: HyperParams, rule: PricingRule, est: EstimatorState) -> Self {
        Self { hp, rule, est, turn: Turn::default(), grad_fn: gradient }
    }

    /// Replaces the likelihood gradient used in the OMD step.
    #[doc(hidden)]
    pub fn with_gradient_fn(mut self, grad_fn: GradientFn) -> Self {
        self.grad_fn = grad_fn;
        self
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }
}

impl Policy for LcbUcbPolicy {
    fn name(&self) -> &'static str {
        match self.rule {
            PricingRule::Lcb => "ucba-lcbp",
            PricingRule::ShiftedLcb { .. } => "ucba-elcbp",
        }
    }

    fn act(&mut self, t: usize, features: &RoundFeatures) -> Result<PolicyDecision> {
        self.turn.begin(self.name())?;
        let trigger = self.rule.trigger(&self.hp);
        self.est.maybe_refresh_with_factor(trigger, t);
        let beta = self.est.radius(&self.hp, t);
        let sqrt_c = trigger.sqrt();
        let shift = self.rule.shift();

        let pricing = lcb_pricing(&self.est, features, beta, sqrt_c, shift);
        let theta_hat = self.est.theta_hat();
        let theta_v_hat = self.est.theta_v_hat();
        let n = features.n_arms();
        let mut ucb_v = Vec::with_capacity(n);
        let mut ucb_u = Vec::with_capacity(n);
        for i in 0..n {
            let x_norm = pricing.x_norms[i];
            ucb_v.push(features.x[i].dot(&theta_v_hat) + beta * x_norm);
            let p = pricing.prices[i];
            let z_norm = self.est.h_factor().inv_norm(&features.z(i, p));
            ucb_u.push(features.utility(i, p, theta_hat) + beta * z_norm + 2.0 * sqrt_c * beta * x_norm + shift);
        }

        let problem = AssortmentProblem::new(ucb_v.iter().map(|v| v.max(0.0)).collect(), ucb_u.clone(), self.hp.k)?;
        let solution = solve(&problem);
        Ok(PolicyDecision {
            offer: offer_from(solution.set, &pricing.prices),
            lcb_v: pricing.lcb,
            reward_index: ucb_v,
            utility_index: ucb_u,
            tau_at_decision: self.est.tau(),
        })
    }

    fn observe(&mut self, features: &RoundFeatures, offer: &Offer, chosen: usize) -> Result<()> {
        self.turn.end(self.name())?;
        self.est.observe_with(features, offer, chosen, &self.hp, self.grad_fn)
    }

    fn estimator(&self) -> Option<&EstimatorState> {
        Some(&self.est)
    }
}
