//! Decision policies behind a common act/observe protocol.

mod etc;
mod lcb;
pub mod oracle;
mod random;
mod ts;

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorState, HyperParams};
use crate::model::{Instance, Offer, RoundFeatures};

pub use etc::{exploration_rounds, EtcPolicy, ExplorationPrices};
pub use lcb::{LcbUcbPolicy, PricingRule};
pub use oracle::{oracle_decision, threshold_oracle, OracleDecision, OraclePolicy};
pub use random::RandomPolicy;
pub use ts::{default_sample_count, TsConfig, TsPolicy};

/// What a policy offers in a round plus the indices behind it.
///
/// Index vectors have one entry per arm; baselines without a given index
/// leave it empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolicyDecision {
    pub offer: Offer,
    pub lcb_v: Vec<f64>,
    /// Upper confidence bound (UCB policies) or sampled value (TS) of each valuation.
    pub reward_index: Vec<f64>,
    pub utility_index: Vec<f64>,
    pub tau_at_decision: usize,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    fn act(&mut self, t: usize, features: &RoundFeatures) -> Result<PolicyDecision>;

    /// Feeds back the slot chosen for the last offer (0 = outside option).
    fn observe(&mut self, features: &RoundFeatures, offer: &Offer, chosen: usize) -> Result<()>;

    fn estimator(&self) -> Option<&EstimatorState> {
        None
    }

    /// Set when the policy fell back to a degraded mode (e.g. a fit that did not converge).
    fn warning(&self) -> Option<String> {
        None
    }
}

/// Enforces strict act/observe alternation.
#[derive(Debug, Default, Clone)]
pub(crate) struct Turn {
    awaiting_feedback: bool,
}

impl Turn {
    pub(crate) fn begin(&mut self, who: &str) -> Result<()> {
        if self.awaiting_feedback {
            return Err(Error::Protocol(format!("{who}: act called twice without observe")));
        }
        self.awaiting_feedback = true;
        Ok(())
    }

    pub(crate) fn end(&mut self, who: &str) -> Result<()> {
        if !self.awaiting_feedback {
            return Err(Error::Protocol(format!("{who}: observe called without a pending act")));
        }
        self.awaiting_feedback = false;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ucba-lcbp")]
    UcbaLcbp,
    #[serde(rename = "tsa-lcbp")]
    TsaLcbp,
    #[serde(rename = "ucba-elcbp")]
    UcbaElcbp,
    #[serde(rename = "etc")]
    Etc,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "oracle")]
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::UcbaLcbp,
        Algorithm::TsaLcbp,
        Algorithm::UcbaElcbp,
        Algorithm::Etc,
        Algorithm::Random,
        Algorithm::Oracle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::UcbaLcbp => "ucba-lcbp",
            Algorithm::TsaLcbp => "tsa-lcbp",
            Algorithm::UcbaElcbp => "ucba-elcbp",
            Algorithm::Etc => "etc",
            Algorithm::Random => "random",
            Algorithm::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Algorithm::ALL.into_iter().find(|a| a.as_str() == key).ok_or_else(|| Error::Config {
            key: "algorithm".into(),
            reason: format!(
                "unknown algorithm `{s}`; expected one of {}",
                Algorithm::ALL.map(|a| a.as_str()).join(", ")
            ),
        })
    }
}

/// Everything needed to instantiate any policy for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySettings {
    pub hp: HyperParams,
    pub ts: TsConfig,
    pub noise_c: f64,
    pub exploration_prices: ExplorationPrices,
}

pub fn build_policy(
    algorithm: Algorithm,
    settings: &PolicySettings,
    instance: &Instance,
    rng: ChaCha8Rng,
) -> Result<Box<dyn Policy>> {
    let hp = settings.hp.clone();
    Ok(match algorithm {
        Algorithm::UcbaLcbp => Box::new(LcbUcbPolicy::new(hp, PricingRule::Lcb)?),
        Algorithm::UcbaElcbp => Box::new(LcbUcbPolicy::new(hp, PricingRule::ShiftedLcb { c: settings.noise_c })?),
        Algorithm::TsaLcbp => Box::new(TsPolicy::new(hp, settings.ts.clone(), rng)?),
        Algorithm::Etc => Box::new(EtcPolicy::new(hp.k, hp.horizon, settings.exploration_prices, rng)),
        Algorithm::Random => Box::new(RandomPolicy::new(hp.k, rng)),
        Algorithm::Oracle => Box::new(OraclePolicy::new(instance.theta.clone(), hp.k)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert!(matches!("nope".parse::<Algorithm>(), Err(Error::Config { .. })));
    }

    #[test]
    fn turn_alternation() {
        let mut t = Turn::default();
        assert!(t.end("p").is_err());
        t.begin("p").unwrap();
        assert!(matches!(t.begin("p"), Err(Error::Protocol(_))));
        t.end("p").unwrap();
    }
}
