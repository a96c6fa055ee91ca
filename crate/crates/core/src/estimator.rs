//! Online mirror descent estimation of the stacked parameter.
//!
//! The estimator keeps three design matrices: `H` (sum of per-round Gram
//! matrices plus `lambda I`), its look-ahead `H~ = H_{t-1} + eta G_{t-1}` used as
//! the OMD metric, and the valuation-only `H_v`. The pricing estimate
//! `theta_v,(tau)` is frozen between determinant-triggered refreshes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{quad_norm, SpdFactor};
use crate::model::{smooth_choice_probabilities, Offer, RoundFeatures};

/// Signature shared by [`gradient`] and substitutes used in fault-injection tests.
pub type GradientFn = fn(&DVector<f64>, &Offer, &RoundFeatures, usize) -> Result<DVector<f64>>;

pub const DEFAULT_C1: f64 = 0.05;
pub const DEFAULT_TRIGGER: f64 = 2.0;

const PROJECTION_TOL: f64 = 1e-11;
const PROJECTION_MAX_ITERS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaSchedule {
    /// `C1 sqrt(d tau) log T log K`.
    #[default]
    Scaled,
    /// The unrolled recursive radius from the confidence analysis; ignores `C1`.
    Recursive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub c1: f64,
    /// Determinant growth factor `C > 1` that triggers a pricing refresh.
    pub c_trigger: f64,
    pub eta: f64,
    pub lambda: f64,
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub horizon: usize,
    pub beta_schedule: BetaSchedule,
}

pub fn default_eta(k: usize) -> f64 {
    0.5 * ((k + 1) as f64).ln() + 3.0
}

pub fn default_lambda(d: usize, eta: f64) -> f64 {
    (84.0 * d as f64 * eta).max(192.0 * 2f64.sqrt() * eta)
}

impl HyperParams {
    pub fn new(d: usize, k: usize, n: usize, horizon: usize) -> Self {
        let eta = default_eta(k);
        Self {
            c1: DEFAULT_C1,
            c_trigger: DEFAULT_TRIGGER,
            eta,
            lambda: default_lambda(d, eta),
            d,
            k,
            n,
            horizon,
            beta_schedule: BetaSchedule::Scaled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        if self.d == 0 || self.k == 0 || self.n == 0 || self.horizon == 0 {
            return bad("d, K, N and T must be positive");
        }
        if !(self.c1 >= 0.0 && self.c1.is_finite()) {
            return bad("C1 must be finite and >= 0");
        }
        if !(self.c_trigger > 1.0 && self.c_trigger.is_finite()) {
            return bad("C must be finite and > 1");
        }
        if !(self.eta > 0.0 && self.lambda > 0.0) {
            return bad("eta and lambda must be positive");
        }
        Ok(())
    }
}

/// `beta_tau = C1 sqrt(d tau) log T log K`.
pub fn beta(tau: usize, hp: &HyperParams) -> f64 {
    hp.c1 * ((hp.d * tau) as f64).sqrt() * (hp.horizon as f64).ln() * (hp.k as f64).ln()
}

/// The per-refresh increment of the recursive squared radius at round `t`.
pub fn recursive_beta_increment(t: usize, hp: &HyperParams) -> f64 {
    let t = t.max(1) as f64;
    let big_t = hp.horizon as f64;
    let (eta, lambda) = (hp.eta, hp.lambda);
    let c = 2.0 * eta;
    let log_term = (2.0 * (1.0 + 2.0 * t).sqrt() * big_t * big_t).ln();
    eta * (6.0 * (1.0 + (hp.k as f64 + 1.0) * t).ln() + 6.0)
        * (17.0 / 16.0 * lambda + 2.0 * lambda.sqrt() * log_term + 16.0 * log_term * log_term)
        + 4.0 * eta
        + 2.0 * eta * 6f64.sqrt() * c * hp.d as f64 * (1.0 + (t + 1.0) / (2.0 * lambda)).ln()
}

/// Recursive radius with the recursion unrolled at a common round `t`.
pub fn beta_recursive(tau: usize, t: usize, hp: &HyperParams) -> f64 {
    (tau as f64 * recursive_beta_increment(t, hp) + 16.0 * hp.lambda).sqrt()
}

/// `-log P_theta(y | S, p)` for the smooth MNL; `y` is a choice slot (0 = outside).
pub fn negative_log_likelihood(theta: &DVector<f64>, offer: &Offer, features: &RoundFeatures, y: usize) -> Result<f64> {
    check_outcome(offer, y)?;
    let utilities: Vec<f64> =
        offer.arms.iter().zip(&offer.prices).map(|(&a, &p)| features.utility(a, p, theta)).collect();
    let m = utilities.iter().fold(0.0_f64, |m, &u| m.max(u));
    let lse = m + ((-m).exp() + utilities.iter().map(|u| (u - m).exp()).sum::<f64>()).ln();
    let chosen = if y == 0 { 0.0 } else { utilities[y - 1] };
    Ok(lse - chosen)
}

fn check_outcome(offer: &Offer, y: usize) -> Result<()> {
    if y > offer.len() {
        return Err(Error::InvalidInput(format!("choice slot {y} out of range for {} offered arms", offer.len())));
    }
    Ok(())
}

fn offered_z(features: &RoundFeatures, offer: &Offer) -> Vec<DVector<f64>> {
    offer.arms.iter().zip(&offer.prices).map(|(&a, &p)| features.z(a, p)).collect()
}

/// `sum_{i in S} (P_theta(i) - y_i) z_i(p_i)`.
pub fn gradient(theta: &DVector<f64>, offer: &Offer, features: &RoundFeatures, y: usize) -> Result<DVector<f64>> {
    check_outcome(offer, y)?;
    let probs = smooth_choice_probabilities(features, theta, offer)?;
    let mut g = DVector::zeros(theta.len());
    for (k, z) in offered_z(features, offer).iter().enumerate() {
        let indicator = if y == k + 1 { 1.0 } else { 0.0 };
        g.axpy(probs.arm(k) - indicator, z, 1.0);
    }
    Ok(g)
}

/// Covariance of `vectors` under the offered-arm probabilities with the
/// outside option sitting at the origin; algebraically
/// `sum P_i v_i v_i^T - (sum P_i v_i)(sum P_i v_i)^T`.
fn softmax_covariance(probs: &[f64], outside: f64, vectors: &[DVector<f64>], dim: usize) -> DMatrix<f64> {
    let mut mean = DVector::zeros(dim);
    for (p, v) in probs.iter().zip(vectors) {
        mean.axpy(*p, v, 1.0);
    }
    let mut cov = outside * &mean * mean.transpose();
    for (p, v) in probs.iter().zip(vectors) {
        let c = v - &mean;
        cov.ger(*p, &c, &c, 1.0);
    }
    cov
}

/// Per-round Gram matrix over `z`, the Hessian of the negative log-likelihood.
pub fn gram(theta: &DVector<f64>, offer: &Offer, features: &RoundFeatures) -> Result<DMatrix<f64>> {
    let probs = smooth_choice_probabilities(features, theta, offer)?;
    let zs = offered_z(features, offer);
    Ok(softmax_covariance(&probs.probs[1..], probs.outside(), &zs, theta.len()))
}

/// Per-round Gram matrix over the valuation features `x` only.
pub fn gram_v(theta: &DVector<f64>, offer: &Offer, features: &RoundFeatures) -> Result<DMatrix<f64>> {
    let probs = smooth_choice_probabilities(features, theta, offer)?;
    let xs: Vec<DVector<f64>> = offer.arms.iter().map(|&a| features.x[a].clone()).collect();
    Ok(softmax_covariance(&probs.probs[1..], probs.outside(), &xs, features.dim()))
}

/// Euclidean projection onto `{||a|| <= 1} x {||b|| <= 1}` with blocks of length `d`.
pub fn project_euclidean(theta: &DVector<f64>, d: usize) -> DVector<f64> {
    let mut out = theta.clone();
    for start in [0, d] {
        let mut block = out.rows_mut(start, d);
        let n = block.norm();
        if n > 1.0 {
            block /= n;
        }
    }
    out
}

pub fn in_theta_set(theta: &DVector<f64>, d: usize, slack: f64) -> bool {
    theta.rows(0, d).norm() <= 1.0 + slack && theta.rows(d, d).norm() <= 1.0 + slack
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub theta: DVector<f64>,
    pub iterations: usize,
    /// Norm of the gradient mapping at the returned point.
    pub residual: f64,
}

/// Projects `target` onto the two-ball set in the metric `A`:
/// `argmin_{theta in Theta} (theta - target)^T A (theta - target)`.
///
/// Accelerated projected gradient with adaptive restart; converged when the
/// projected-gradient step shrinks below 1e-11 relative to the iterate.
pub fn project_in_metric(target: &DVector<f64>, metric: &DMatrix<f64>, d: usize) -> Result<Projection> {
    if in_theta_set(target, d, 0.0) {
        return Ok(Projection { theta: target.clone(), iterations: 0, residual: 0.0 });
    }
    let lipschitz = metric.clone().symmetric_eigenvalues().max();
    if !(lipschitz > 0.0 && lipschitz.is_finite()) {
        return Err(Error::Numerical("projection metric is not positive definite".into()));
    }
    let step = 1.0 / lipschitz;
    let grad = |th: &DVector<f64>| metric * (th - target);

    let mut x = project_euclidean(target, d);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut residual = f64::INFINITY;
    for iter in 1..=PROJECTION_MAX_ITERS {
        let x_next = project_euclidean(&(&y - step * grad(&y)), d);
        // Gradient restart: drop momentum once it points uphill.
        if (&y - &x_next).dot(&(&x_next - &x)) > 0.0 {
            momentum = 1.0;
        }
        let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &x_next + ((momentum - 1.0) / momentum_next) * (&x_next - &x);
        x = x_next;
        momentum = momentum_next;

        let mapped = project_euclidean(&(&x - step * grad(&x)), d);
        residual = (&x - mapped).norm();
        if residual < PROJECTION_TOL * x.norm().max(1.0) {
            return Ok(Projection { theta: x, iterations: iter, residual });
        }
    }
    Err(Error::Numerical(format!(
        "metric projection did not converge in {PROJECTION_MAX_ITERS} iterations (residual {residual:.3e}, lipschitz {lipschitz:.3e})"
    )))
}

/// One OMD step: `argmin_{theta in Theta} g^T theta + ||theta - prev||^2_{H~} / (2 eta)`.
pub fn omd_step(
    prev: &DVector<f64>,
    eta: f64,
    grad: &DVector<f64>,
    h_tilde: &DMatrix<f64>,
    h_tilde_factor: &SpdFactor,
    d: usize,
) -> Result<DVector<f64>> {
    let unconstrained = prev - eta * h_tilde_factor.solve(grad);
    Ok(project_in_metric(&unconstrained, h_tilde, d)?.theta)
}

/// `e^{-2 sqrt 2} / (1 + K e^{2 sqrt 2})^2`, a floor on `P(i) P(outside)` for prices in `[0, 1]`.
pub fn kappa_bound(k: usize) -> f64 {
    let b = 2.0 * 2f64.sqrt();
    (-b).exp() / (1.0 + k as f64 * b.exp()).powi(2)
}

/// `min_i P_theta(i) P_theta(outside)` for one offer, or `None` for an empty offer.
pub fn kappa_contribution(features: &RoundFeatures, theta: &DVector<f64>, offer: &Offer) -> Result<Option<f64>> {
    if offer.is_empty() {
        return Ok(None);
    }
    let probs = smooth_choice_probabilities(features, theta, offer)?;
    let outside = probs.outside();
    Ok(probs.probs[1..].iter().map(|p| p * outside).reduce(f64::min))
}

/// Minimum over recorded per-round contributions.
pub fn empirical_kappa(contributions: impl IntoIterator<Item = f64>) -> Option<f64> {
    contributions.into_iter().filter(|c| c.is_finite()).reduce(f64::min)
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    theta_hat: DVector<f64>,
    theta_v_frozen: DVector<f64>,
    h: DMatrix<f64>,
    h_tilde: DMatrix<f64>,
    h_v: DMatrix<f64>,
    h_factor: SpdFactor,
    h_tilde_factor: SpdFactor,
    h_v_factor: SpdFactor,
    tau: usize,
    t_tau: usize,
    logdet_at_last_update: f64,
    last_gram: DMatrix<f64>,
    rounds_observed: usize,
    pinned: bool,
}

impl EstimatorState {
    pub fn new(hp: &HyperParams) -> Result<Self> {
        Self::starting_at(hp, DVector::zeros(2 * hp.d), false)
    }

    /// An estimator whose estimate is held at `theta` forever; designs still accumulate.
    pub fn pinned(hp: &HyperParams, theta: DVector<f64>) -> Result<Self> {
        Self::starting_at(hp, theta, true)
    }

    fn starting_at(hp: &HyperParams, theta_hat: DVector<f64>, pinned: bool) -> Result<Self> {
        hp.validate()?;
        let d = hp.d;
        if theta_hat.len() != 2 * d {
            return Err(Error::InvalidInput("initial estimate must have length 2d".into()));
        }
        let h = DMatrix::identity(2 * d, 2 * d) * hp.lambda;
        let h_v = DMatrix::identity(d, d) * hp.lambda;
        let h_factor = SpdFactor::new(&h)?;
        let h_v_factor = SpdFactor::new(&h_v)?;
        let theta_v_frozen = if pinned { theta_hat.rows(0, d).into_owned() } else { DVector::zeros(d) };
        Ok(Self {
            logdet_at_last_update: h_factor.log_det(),
            h_tilde: h.clone(),
            h_tilde_factor: h_factor.clone(),
            theta_hat,
            theta_v_frozen,
            h,
            h_v,
            h_factor,
            h_v_factor,
            tau: 1,
            t_tau: 1,
            last_gram: DMatrix::zeros(2 * d, 2 * d),
            rounds_observed: 0,
            pinned,
        })
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn theta_v_hat(&self) -> DVector<f64> {
        self.theta_hat.rows(0, self.dim()).into_owned()
    }

    pub fn theta_v_frozen(&self) -> &DVector<f64> {
        &self.theta_v_frozen
    }

    pub fn dim(&self) -> usize {
        self.h_v.nrows()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn h_tilde(&self) -> &DMatrix<f64> {
        &self.h_tilde
    }

    pub fn h_v(&self) -> &DMatrix<f64> {
        &self.h_v
    }

    pub fn h_factor(&self) -> &SpdFactor {
        &self.h_factor
    }

    pub fn h_v_factor(&self) -> &SpdFactor {
        &self.h_v_factor
    }

    pub fn last_gram(&self) -> &DMatrix<f64> {
        &self.last_gram
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn t_tau(&self) -> usize {
        self.t_tau
    }

    pub fn log_det_h(&self) -> f64 {
        self.h_factor.log_det()
    }

    pub fn logdet_at_last_update(&self) -> f64 {
        self.logdet_at_last_update
    }

    pub fn rounds_observed(&self) -> usize {
        self.rounds_observed
    }

    /// Radius for the current `tau` at round `t`.
    pub fn radius(&self, hp: &HyperParams, t: usize) -> f64 {
        match hp.beta_schedule {
            BetaSchedule::Scaled => beta(self.tau, hp),
            BetaSchedule::Recursive => beta_recursive(self.tau, t, hp),
        }
    }

    /// `||theta_hat - theta||_H`.
    pub fn distance_in_h(&self, theta: &DVector<f64>) -> f64 {
        quad_norm(&self.h, &(&self.theta_hat - theta))
    }

    /// `H~ <- H + eta G`, then `H <- H + G`, `H_v <- H_v + G_v`; refactorises all three.
    pub fn advance_designs(&mut self, g: &DMatrix<f64>, g_v: &DMatrix<f64>, eta: f64) -> Result<()> {
        let h_tilde = &self.h + eta * g;
        let h = &self.h + g;
        let h_v = &self.h_v + g_v;
        let h_tilde_factor = SpdFactor::new(&h_tilde)?;
        let h_factor = SpdFactor::new(&h)?;
        let h_v_factor = SpdFactor::new(&h_v)?;
        self.h_tilde = h_tilde;
        self.h = h;
        self.h_v = h_v;
        self.h_tilde_factor = h_tilde_factor;
        self.h_factor = h_factor;
        self.h_v_factor = h_v_factor;
        self.last_gram = g.clone();
        Ok(())
    }

    /// Feeds back one round: Grams and gradient at the current estimate,
    /// design advance, then the OMD step.
    pub fn observe(&mut self, features: &RoundFeatures, offer: &Offer, chosen: usize, hp: &HyperParams) -> Result<()> {
        self.observe_with(features, offer, chosen, hp, gradient)
    }

    /// As [`observe`](Self::observe) with a caller-supplied gradient routine.
    pub fn observe_with(
        &mut self,
        features: &RoundFeatures,
        offer: &Offer,
        chosen: usize,
        hp: &HyperParams,
        grad_fn: GradientFn,
    ) -> Result<()> {
        let g = grad_fn(&self.theta_hat, offer, features, chosen)?;
        let gram_z = gram(&self.theta_hat, offer, features)?;
        let gram_x = gram_v(&self.theta_hat, offer, features)?;
        self.advance_designs(&gram_z, &gram_x, hp.eta)?;
        if !self.pinned {
            self.theta_hat = omd_step(&self.theta_hat, hp.eta, &g, &self.h_tilde, &self.h_tilde_factor, hp.d)?;
        }
        self.rounds_observed += 1;
        Ok(())
    }

    /// Refreshes the frozen pricing estimate when `det H` has grown by more
    /// than `C` since the last refresh. Returns whether `tau` advanced.
    pub fn maybe_refresh_pricing_estimate(&mut self, hp: &HyperParams, t: usize) -> bool {
        self.maybe_refresh_with_factor(hp.c_trigger, t)
    }

    pub fn maybe_refresh_with_factor(&mut self, c_trigger: f64, t: usize) -> bool {
        let log_det = self.log_det_h();
        if log_det > c_trigger.ln() + self.logdet_at_last_update {
            self.tau += 1;
            self.t_tau = t;
            self.theta_v_frozen = self.theta_v_hat();
            self.logdet_at_last_update = log_det;
            true
        } else {
            false
        }
    }

    /// Overwrites `H` directly; used to exercise the trigger.
    #[doc(hidden)]
    pub fn set_h_for_testing(&mut self, h: DMatrix<f64>) -> Result<()> {
        self.h_factor = SpdFactor::new(&h)?;
        self.h = h;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_instance, Offer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn one_arm() -> RoundFeatures {
        RoundFeatures::new(vec![dv(&[0.6, 0.8])], vec![dv(&[1.0, 0.0])]).unwrap()
    }

    #[test]
    fn default_constants() {
        let hp = HyperParams::new(4, 5, 10, 1000);
        let eta = 0.5 * 6f64.ln() + 3.0;
        assert!((hp.eta - eta).abs() < 1e-15);
        assert!((hp.lambda - 336.0 * eta).abs() < 1e-9);
        let hp1 = HyperParams::new(1, 5, 10, 1000);
        assert!((hp1.lambda - 192.0 * 2f64.sqrt() * eta).abs() < 1e-9);
    }

    #[test]
    fn beta_values() {
        let mut hp = HyperParams::new(4, 5, 5, 1000);
        hp.c1 = 1.0;
        let b3 = beta(3, &hp);
        assert!((b3 - 12f64.sqrt() * 1000f64.ln() * 5f64.ln()).abs() < 1e-12);
        assert!((b3 - 38.50).abs() < 0.02);
        assert!((beta(6, &hp) / b3 - 2f64.sqrt()).abs() < 1e-14);
        hp.c1 = DEFAULT_C1;
        assert!((beta(3, &hp) - 0.05 * b3).abs() < 1e-12);
    }

    #[test]
    fn nll_uniform_case() {
        let f = RoundFeatures::new(vec![dv(&[1.0]), dv(&[0.5]), dv(&[0.2])], vec![dv(&[1.0]); 3]).unwrap();
        let offer = Offer::new(vec![0, 2], vec![0.3, 0.1]).unwrap();
        for y in 0..=2 {
            let v = negative_log_likelihood(&DVector::zeros(2), &offer, &f, y).unwrap();
            assert!((v - 3f64.ln()).abs() < 1e-15);
        }
        assert_eq!(negative_log_likelihood(&DVector::zeros(2), &Offer::empty(), &f, 0).unwrap(), 0.0);
        assert!(negative_log_likelihood(&DVector::zeros(2), &offer, &f, 3).is_err());
    }

    #[test]
    fn gradient_small_cases() {
        let f = one_arm();
        assert_eq!(gradient(&DVector::zeros(4), &Offer::empty(), &f, 0).unwrap(), DVector::zeros(4));
        let offer = Offer::new(vec![0], vec![0.4]).unwrap();
        let g = gradient(&DVector::zeros(4), &offer, &f, 1).unwrap();
        let z = f.z(0, 0.4);
        assert!((g + 0.5 * &z).norm() < 1e-15);
    }

    #[test]
    fn gram_small_cases() {
        let f = one_arm();
        assert_eq!(gram(&DVector::zeros(4), &Offer::empty(), &f).unwrap(), DMatrix::zeros(4, 4));
        let offer = Offer::new(vec![0], vec![0.4]).unwrap();
        let g = gram(&DVector::zeros(4), &offer, &f).unwrap();
        let z = f.z(0, 0.4);
        assert!((g - 0.25 * &z * z.transpose()).norm() < 1e-15);
    }

    #[test]
    fn gram_matches_literal_formula() {
        let inst = generate_instance(6, 3, 9).unwrap();
        let f = inst.feature_stream().next().unwrap();
        let offer = Offer::new(vec![1, 3, 4], vec![0.2, 0.5, 0.1]).unwrap();
        let theta = inst.theta.stacked() * 0.7;
        let probs = smooth_choice_probabilities(&f, &theta, &offer).unwrap();
        let zs = offered_z(&f, &offer);
        let mut literal = DMatrix::zeros(6, 6);
        for (i, zi) in zs.iter().enumerate() {
            literal += probs.arm(i) * zi * zi.transpose();
            for (j, zj) in zs.iter().enumerate() {
                literal -= probs.arm(i) * probs.arm(j) * zi * zj.transpose();
            }
        }
        assert!((gram(&theta, &offer, &f).unwrap() - literal).norm() < 1e-14);
    }

    #[test]
    fn projection_trivial_cases() {
        let metric = DMatrix::from_row_slice(
            4,
            4,
            &[3.0, 0.5, 0.0, 0.1, 0.5, 2.0, 0.2, 0.0, 0.0, 0.2, 1.5, 0.3, 0.1, 0.0, 0.3, 1.0],
        );
        let inside = dv(&[0.3, -0.2, 0.1, 0.4]);
        let p = project_in_metric(&inside, &metric, 2).unwrap();
        assert_eq!(p.theta, inside);
        let outside = dv(&[2.0, 1.0, -0.5, 3.0]);
        let p = project_in_metric(&outside, &metric, 2).unwrap();
        assert!(in_theta_set(&p.theta, 2, 1e-12));
        assert!(p.residual < 1e-8);
    }

    #[test]
    fn omd_stationary_and_inactive() {
        let hp = HyperParams::new(2, 3, 4, 100);
        let state = EstimatorState::new(&hp).unwrap();
        let prev = dv(&[0.1, 0.2, 0.3, 0.1]);
        let zero = DVector::zeros(4);
        let stay = omd_step(&prev, hp.eta, &zero, state.h_tilde(), &state.h_tilde_factor, 2).unwrap();
        assert_eq!(stay, prev);
        let g = dv(&[1.0, -2.0, 0.5, 0.0]);
        let moved = omd_step(&prev, hp.eta, &g, state.h_tilde(), &state.h_tilde_factor, 2).unwrap();
        let expected = &prev - hp.eta * state.h_tilde().clone().try_inverse().unwrap() * &g;
        assert!((moved - expected).norm() < 1e-10);
    }

    #[test]
    fn initial_designs_and_recurrence() {
        let hp = HyperParams::new(3, 5, 8, 200);
        let mut state = EstimatorState::new(&hp).unwrap();
        assert_eq!(state.h(), &(DMatrix::identity(6, 6) * hp.lambda));
        assert_eq!(state.h_tilde(), state.h());
        assert_eq!(state.h_v(), &(DMatrix::identity(3, 3) * hp.lambda));

        let inst = generate_instance(8, 3, 4).unwrap();
        let f = inst.feature_stream().next().unwrap();
        let offer = Offer::new(vec![0, 2, 5], vec![0.1, 0.3, 0.2]).unwrap();
        let g1 = gram(state.theta_hat(), &offer, &f).unwrap();
        state.observe(&f, &offer, 2, &hp).unwrap();
        let diff = state.h_tilde() - state.h();
        assert!((diff - (hp.eta - 1.0) * &g1).norm() < 1e-10);
        assert!((state.h() - (state.h_tilde() - hp.eta * state.last_gram() + state.last_gram())).norm() < 1e-10);
    }

    #[test]
    fn trigger_semantics() {
        let hp = HyperParams::new(2, 3, 4, 100);
        let mut state = EstimatorState::new(&hp).unwrap();
        assert!(!state.maybe_refresh_pricing_estimate(&hp, 1));
        let doubled = state.h() * 2.0;
        state.set_h_for_testing(doubled).unwrap();
        assert!(state.maybe_refresh_pricing_estimate(&hp, 2));
        assert_eq!(state.tau(), 2);
        assert_eq!(state.t_tau(), 2);
        assert!(!state.maybe_refresh_pricing_estimate(&hp, 3));
    }

    #[test]
    fn kappa_bound_values() {
        let b = 2.0 * 2f64.sqrt();
        assert!((kappa_bound(1) - (-b).exp() / (1.0 + b.exp()).powi(2)).abs() < 1e-18);
        assert!((kappa_bound(1) - 1.841e-4).abs() < 1e-6);
        let mut prev = kappa_bound(1);
        for k in 2..200 {
            let cur = kappa_bound(k);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn recursive_radius_grows_with_tau() {
        let hp = HyperParams::new(4, 5, 15, 2000);
        let b1 = beta_recursive(1, 10, &hp);
        let b2 = beta_recursive(2, 10, &hp);
        assert!(b2 > b1 && b1 > (16.0 * hp.lambda).sqrt());
    }

    #[test]
    fn log_det_nondecreasing() {
        let hp = HyperParams::new(3, 4, 8, 500);
        let mut state = EstimatorState::new(&hp).unwrap();
        let inst = generate_instance(8, 3, 21).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut prev = state.log_det_h();
        for f in inst.feature_stream().take(500) {
            let arms: Vec<usize> = rand::seq::index::sample(&mut rng, 8, 4).into_vec();
            let prices: Vec<f64> = arms.iter().map(|_| rng.random::<f64>()).collect();
            let offer = Offer::new(arms, prices).unwrap();
            let y = rng.random_range(0..=4);
            state.observe(&f, &offer, y, &hp).unwrap();
            let cur = state.log_det_h();
            assert!(cur >= prev - 1e-12);
            assert!(in_theta_set(state.theta_hat(), 3, 1e-9));
            prev = cur;
        }
    }
}
