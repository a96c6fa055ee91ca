//! The censored MNL environment.
//!
//! An arm `i` offered at price `p_i` survives censoring when `p_i <= v_i`
//! (or `p_i <= (v_i + zeta_i)^+` under activation noise); surviving arms
//! compete in a softmax with the outside option, which has utility 0 and
//! sits at slot 0 of every [`ChoiceDistribution`].

use nalgebra::DVector;
use rand::distr::Open01;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Latent parameters `[theta_v; theta_alpha]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub v_part: DVector<f64>,
    pub alpha_part: DVector<f64>,
}

impl Theta {
    pub fn new(v_part: DVector<f64>, alpha_part: DVector<f64>) -> Result<Self> {
        if v_part.len() != alpha_part.len() || v_part.is_empty() {
            return Err(Error::InvalidInput(format!(
                "theta blocks must share a positive dimension, got {} and {}",
                v_part.len(),
                alpha_part.len()
            )));
        }
        if v_part.iter().chain(alpha_part.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("theta has non-finite entries".into()));
        }
        Ok(Self { v_part, alpha_part })
    }

    pub fn dim(&self) -> usize {
        self.v_part.len()
    }

    pub fn stacked(&self) -> DVector<f64> {
        stack(&self.v_part, &self.alpha_part)
    }

    /// Splits a stacked `2d` vector back into its blocks.
    pub fn from_stacked(theta: &DVector<f64>) -> Result<Self> {
        if !theta.len().is_multiple_of(2) {
            return Err(Error::InvalidInput("stacked theta must have even length".into()));
        }
        let d = theta.len() / 2;
        Self::new(theta.rows(0, d).into_owned(), theta.rows(d, d).into_owned())
    }
}

pub(crate) fn stack(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// One round's valuation features `x` and sensitivity features `w`, one row per arm.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundFeatures {
    pub x: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
}

impl RoundFeatures {
    pub fn new(x: Vec<DVector<f64>>, w: Vec<DVector<f64>>) -> Result<Self> {
        if x.len() != w.len() || x.is_empty() {
            return Err(Error::InvalidInput("x and w must list the same positive number of arms".into()));
        }
        let d = x[0].len();
        if x.iter().chain(w.iter()).any(|r| r.len() != d) {
            return Err(Error::InvalidInput("feature rows must share one dimension".into()));
        }
        if x.iter().chain(w.iter()).flat_map(|r| r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features contain non-finite entries".into()));
        }
        Ok(Self { x, w })
    }

    pub fn n_arms(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn valuation(&self, arm: usize, theta: &Theta) -> f64 {
        self.x[arm].dot(&theta.v_part)
    }

    pub fn sensitivity(&self, arm: usize, theta: &Theta) -> f64 {
        self.w[arm].dot(&theta.alpha_part)
    }

    pub fn z(&self, arm: usize, price: f64) -> DVector<f64> {
        stack(&self.x[arm], &(-price * &self.w[arm]))
    }

    /// `z_i(p)^T theta` for a stacked `theta`, without materialising `z`.
    pub fn utility(&self, arm: usize, price: f64, theta: &DVector<f64>) -> f64 {
        let d = self.dim();
        self.x[arm].dot(&theta.rows(0, d)) - price * self.w[arm].dot(&theta.rows(d, d))
    }
}

/// `z(p) = [x; -p w]`.
pub fn z_vector(x: &DVector<f64>, w: &DVector<f64>, price: f64) -> Result<DVector<f64>> {
    if x.len() != w.len() {
        return Err(Error::InvalidInput("x and w dimensions differ".into()));
    }
    if !price.is_finite() || price < 0.0 {
        return Err(Error::InvalidInput(format!("price must be finite and >= 0, got {price}")));
    }
    if x.iter().chain(w.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature entry".into()));
    }
    Ok(stack(x, &(-price * w)))
}

/// An assortment with aligned prices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Offer {
    pub arms: Vec<usize>,
    pub prices: Vec<f64>,
}

impl Offer {
    pub fn new(arms: Vec<usize>, prices: Vec<f64>) -> Result<Self> {
        let offer = Self { arms, prices };
        offer.check_shape()?;
        Ok(offer)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        if self.arms.len() != self.prices.len() {
            return Err(Error::InvalidInput("offer arms and prices differ in length".into()));
        }
        for (k, a) in self.arms.iter().enumerate() {
            if self.arms[..k].contains(a) {
                return Err(Error::InvalidInput(format!("arm {a} offered twice")));
            }
        }
        if let Some(p) = self.prices.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!("price {p} is not finite and >= 0")));
        }
        Ok(())
    }

    /// Checks the offer against a round with `n_arms` arms and capacity `k`.
    pub fn validate(&self, n_arms: usize, k: usize) -> Result<()> {
        self.check_shape()?;
        if self.arms.len() > k {
            return Err(Error::InvalidInput(format!("offer has {} arms, capacity is {k}", self.arms.len())));
        }
        if let Some(a) = self.arms.iter().find(|a| **a >= n_arms) {
            return Err(Error::InvalidInput(format!("arm {a} out of range for {n_arms} arms")));
        }
        Ok(())
    }
}

/// Choice probabilities over `{outside} ∪ S`; slot `k + 1` belongs to `offer.arms[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceDistribution {
    pub probs: Vec<f64>,
}

impl ChoiceDistribution {
    pub fn outside(&self) -> f64 {
        self.probs[0]
    }

    /// Probability of the `k`-th offered arm.
    pub fn arm(&self, k: usize) -> f64 {
        self.probs[k + 1]
    }
}

/// Softmax with an implicit outside utility of 0; `None` entries are censored.
fn softmax_with_outside(utilities: &[Option<f64>]) -> Vec<f64> {
    let m = utilities.iter().flatten().fold(0.0_f64, |m, &u| m.max(u));
    let outside = (-m).exp();
    let weights: Vec<f64> = utilities.iter().map(|u| u.map_or(0.0, |u| (u - m).exp())).collect();
    let denom = outside + weights.iter().sum::<f64>();
    std::iter::once(outside / denom).chain(weights.iter().map(|w| w / denom)).collect()
}

fn check_offer(features: &RoundFeatures, offer: &Offer) -> Result<()> {
    offer.validate(features.n_arms(), features.n_arms())
}

/// Censored choice probabilities. With `noise`, entry `k` is the activation
/// noise realisation of `offer.arms[k]` and the threshold becomes `(v + zeta)^+`.
pub fn choice_probabilities(
    features: &RoundFeatures,
    theta: &Theta,
    offer: &Offer,
    noise: Option<&[f64]>,
) -> Result<ChoiceDistribution> {
    check_offer(features, offer)?;
    if let Some(z) = noise {
        if z.len() != offer.len() {
            return Err(Error::InvalidInput(format!("expected {} noise draws, got {}", offer.len(), z.len())));
        }
    }
    let stacked = theta.stacked();
    let utilities: Vec<Option<f64>> = offer
        .arms
        .iter()
        .zip(&offer.prices)
        .enumerate()
        .map(|(k, (&arm, &p))| {
            let v = features.valuation(arm, theta);
            let threshold = match noise {
                Some(z) => (v + z[k]).max(0.0),
                None => v,
            };
            (p <= threshold).then(|| features.utility(arm, p, &stacked))
        })
        .collect();
    Ok(ChoiceDistribution { probs: softmax_with_outside(&utilities) })
}

/// MNL probabilities with every activation indicator set to one.
pub fn smooth_choice_probabilities(
    features: &RoundFeatures,
    theta: &DVector<f64>,
    offer: &Offer,
) -> Result<ChoiceDistribution> {
    check_offer(features, offer)?;
    if theta.len() != 2 * features.dim() {
        return Err(Error::InvalidInput("theta must have length 2d".into()));
    }
    let utilities: Vec<Option<f64>> =
        offer.arms.iter().zip(&offer.prices).map(|(&arm, &p)| Some(features.utility(arm, p, theta))).collect();
    Ok(ChoiceDistribution { probs: softmax_with_outside(&utilities) })
}

/// Draws slot `k` with probability `probs[k]` (0 is the outside option).
pub fn sample_choice<R: Rng + ?Sized>(dist: &ChoiceDistribution, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in dist.probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap at the top; take the last slot with mass.
    dist.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Zero-mean law of the activation noise on `[-c, c]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLaw {
    #[default]
    Uniform,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationNoise {
    pub c: f64,
    pub law: NoiseLaw,
}

impl ActivationNoise {
    pub fn uniform(c: f64) -> Result<Self> {
        Self::new(c, NoiseLaw::Uniform)
    }

    pub fn new(c: f64, law: NoiseLaw) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidInput(format!("noise half-width must lie in [0, 1], got {c}")));
        }
        Ok(Self { c, law })
    }

    pub fn is_deterministic(&self) -> bool {
        self.c == 0.0
    }

    /// `P(zeta <= s)`.
    pub fn cdf(&self, s: f64) -> f64 {
        if self.c == 0.0 {
            return if s >= 0.0 { 1.0 } else { 0.0 };
        }
        let u = (s / self.c).clamp(-1.0, 1.0);
        match self.law {
            NoiseLaw::Uniform => 0.5 * (u + 1.0),
            NoiseLaw::Triangular => {
                if u <= 0.0 {
                    0.5 * (1.0 + u) * (1.0 + u)
                } else {
                    1.0 - 0.5 * (1.0 - u) * (1.0 - u)
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.c == 0.0 {
            return 0.0;
        }
        match self.law {
            NoiseLaw::Uniform => self.c * (2.0 * rng.random::<f64>() - 1.0),
            NoiseLaw::Triangular => self.c * (rng.random::<f64>() - rng.random::<f64>()),
        }
    }

    /// Probability that an arm with valuation `v` priced at `p` stays active.
    pub fn activation_probability(&self, v: f64, p: f64) -> f64 {
        if p <= 0.0 {
            // (v + zeta)^+ >= 0 always admits a zero price.
            return 1.0;
        }
        1.0 - self.cdf(p - v)
    }
}

/// Expected revenue `sum_i p_i P(i | S, p)`, averaged over the activation
/// noise when a noise model is given.
pub fn expected_revenue(
    features: &RoundFeatures,
    theta: &Theta,
    offer: &Offer,
    noise: Option<&ActivationNoise>,
) -> Result<f64> {
    let noise = noise.filter(|n| !n.is_deterministic());
    let Some(noise) = noise else {
        let dist = choice_probabilities(features, theta, offer, None)?;
        return Ok(offer.prices.iter().enumerate().map(|(k, p)| p * dist.arm(k)).sum());
    };
    check_offer(features, offer)?;

    let stacked = theta.stacked();
    let mut sure = Vec::new();
    let mut uncertain = Vec::new();
    for (k, (&arm, &p)) in offer.arms.iter().zip(&offer.prices).enumerate() {
        let q = noise.activation_probability(features.valuation(arm, theta), p);
        let weight = features.utility(arm, p, &stacked).exp();
        if q >= 1.0 {
            sure.push((k, weight));
        } else if q > 0.0 {
            uncertain.push((k, weight, q));
        }
    }
    if uncertain.len() > 20 {
        return Err(Error::TooLarge(format!("{} arms straddle the noisy censoring threshold", uncertain.len())));
    }

    let base_num: f64 = sure.iter().map(|&(k, w)| offer.prices[k] * w).sum();
    let base_den: f64 = 1.0 + sure.iter().map(|&(_, w)| w).sum::<f64>();
    let mut total = 0.0;
    for mask in 0u32..(1u32 << uncertain.len()) {
        let mut prob = 1.0;
        let mut num = base_num;
        let mut den = base_den;
        for (bit, &(k, w, q)) in uncertain.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                prob *= q;
                num += offer.prices[k] * w;
                den += w;
            } else {
                prob *= 1.0 - q;
            }
        }
        total += prob * num / den;
    }
    Ok(total)
}

/// A synthetic problem: latent parameters plus a seeded per-round feature stream.
#[derive(Debug, Clone)]
pub struct Instance {
    pub theta: Theta,
    pub n_arms: usize,
    pub dim: usize,
    seed: u64,
}

fn positive_unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    let v = DVector::from_iterator(dim, (0..dim).map(|_| rng.sample::<f64, _>(Open01)));
    let norm = v.norm();
    v / norm
}

/// Parameters and features with i.i.d. `U(0, 1)` entries, each vector normalised to unit length.
pub fn generate_instance(n_arms: usize, dim: usize, seed: u64) -> Result<Instance> {
    if n_arms == 0 || dim == 0 {
        return Err(Error::InvalidInput("need at least one arm and one dimension".into()));
    }
    let mut rng = stream_rng(seed, Stream::Parameters);
    let v_part = positive_unit_vector(&mut rng, dim);
    let alpha_part = positive_unit_vector(&mut rng, dim);
    Ok(Instance { theta: Theta { v_part, alpha_part }, n_arms, dim, seed })
}

impl Instance {
    pub fn with_theta(theta: Theta, n_arms: usize, seed: u64) -> Self {
        let dim = theta.dim();
        Self { theta, n_arms, dim, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh features for rounds 1, 2, ...; identical for identical seeds.
    pub fn feature_stream(&self) -> FeatureStream {
        FeatureStream { rng: stream_rng(self.seed, Stream::Features), n_arms: self.n_arms, dim: self.dim }
    }
}

pub struct FeatureStream {
    rng: ChaCha8Rng,
    n_arms: usize,
    dim: usize,
}

impl Iterator for FeatureStream {
    type Item = RoundFeatures;

    fn next(&mut self) -> Option<RoundFeatures> {
        let x = (0..self.n_arms).map(|_| positive_unit_vector(&mut self.rng, self.dim)).collect();
        let w = (0..self.n_arms).map(|_| positive_unit_vector(&mut self.rng, self.dim)).collect();
        Some(RoundFeatures { x, w })
    }
}
