//! Replicated regret experiments.
//!
//! Regret is accounted analytically: each round the oracle's and the
//! policy's expected revenues are evaluated on the realised features, and the
//! sampled purchase only feeds the policy's learning.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{kappa_contribution, BetaSchedule, HyperParams, DEFAULT_C1, DEFAULT_TRIGGER};
use crate::model::{
    choice_probabilities, expected_revenue, generate_instance, sample_choice, ActivationNoise, Instance,
};
use crate::policies::{
    build_policy, default_sample_count, threshold_oracle, Algorithm, ExplorationPrices, Policy, PolicySettings,
    TsConfig,
};
use crate::rng::{replication_seed, stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_arms: usize,
    pub k: usize,
    pub d: usize,
    pub horizon: usize,
    pub algorithm: Algorithm,
    pub c1: f64,
    pub c_trigger: f64,
    /// Overrides the TS sample count `M`.
    pub samples: Option<usize>,
    /// Overrides the TS utility multiplier (default `8 C`).
    pub ts_utility_scale: Option<f64>,
    pub noise_c: f64,
    pub replications: usize,
    pub base_seed: u64,
    pub record_diagnostics: bool,
    pub beta_schedule: BetaSchedule,
    pub exploration_prices: ExplorationPrices,
}

impl ExperimentConfig {
    /// Defaults: `K = 5`, `d = 4`, `C1 = 0.05`, `C = 2`.
    pub fn new(algorithm: Algorithm, n_arms: usize, horizon: usize) -> Self {
        Self {
            n_arms,
            k: 5,
            d: 4,
            horizon,
            algorithm,
            c1: DEFAULT_C1,
            c_trigger: DEFAULT_TRIGGER,
            samples: None,
            ts_utility_scale: None,
            noise_c: 0.0,
            replications: 1,
            base_seed: 0,
            record_diagnostics: true,
            beta_schedule: BetaSchedule::Scaled,
            exploration_prices: ExplorationPrices::Zero,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::Config { key: key.into(), reason: reason.into() });
        if self.n_arms == 0 {
            return bad("N", "must be >= 1");
        }
        if self.k == 0 || self.k > self.n_arms {
            return bad("K", "must satisfy 1 <= K <= N");
        }
        if self.d == 0 {
            return bad("d", "must be >= 1");
        }
        if self.horizon == 0 {
            return bad("T", "must be >= 1");
        }
        if self.replications == 0 {
            return bad("replications", "must be >= 1");
        }
        if !(self.c1.is_finite() && self.c1 >= 0.0) {
            return bad("C1", "must be finite and >= 0");
        }
        if !(self.c_trigger.is_finite() && self.c_trigger > 1.0) {
            return bad("C", "must be finite and > 1");
        }
        if self.samples == Some(0) {
            return bad("M", "must be >= 1");
        }
        if self.ts_utility_scale.is_some_and(|s| !s.is_finite()) {
            return bad("ts_utility_scale", "must be finite");
        }
        if !(0.0..=1.0).contains(&self.noise_c) {
            return bad("noise_c", "must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn hyper_params(&self) -> HyperParams {
        let mut hp = HyperParams::new(self.d, self.k, self.n_arms, self.horizon);
        hp.c1 = self.c1;
        hp.c_trigger = self.c_trigger;
        hp.beta_schedule = self.beta_schedule;
        hp
    }

    pub fn policy_settings(&self) -> PolicySettings {
        let hp = self.hyper_params();
        let mut ts = TsConfig::for_problem(&hp);
        if let Some(m) = self.samples {
            ts.samples = m;
        }
        if let Some(s) = self.ts_utility_scale {
            ts.utility_scale = s;
        }
        PolicySettings { hp, ts, noise_c: self.noise_c, exploration_prices: self.exploration_prices }
    }

    pub fn noise(&self) -> Option<ActivationNoise> {
        (self.noise_c > 0.0).then(|| ActivationNoise { c: self.noise_c, law: Default::default() })
    }

    pub fn resolved_samples(&self) -> usize {
        self.samples.unwrap_or_else(|| default_sample_count(self.n_arms))
    }

    pub fn replication_seeds(&self) -> Vec<u64> {
        (0..self.replications).map(|r| replication_seed(self.base_seed, r)).collect()
    }
}

/// Estimator diagnostics recorded per round, taken at decision time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    pub tau: Vec<usize>,
    /// `||theta_hat_t - theta*||_{H_t} <= beta_tau`.
    pub good_event: Vec<bool>,
    /// `max_{i in S_t} ||z_i(p_i)||^2_{H_t^{-1}}`, 0 for an empty offer.
    pub max_design_norm_sq: Vec<f64>,
    /// `min_{i in S_t} P(i) P(outside)` at the current estimate; NaN for an empty offer.
    pub kappa_contribution: Vec<f64>,
    pub lambda: f64,
    pub final_tau: usize,
    /// `log det H` at the last pricing refresh.
    pub final_refresh_log_det: f64,
}

impl Diagnostics {
    pub fn empirical_kappa(&self) -> Option<f64> {
        crate::estimator::empirical_kappa(self.kappa_contribution.iter().copied())
    }

    pub fn good_event_fraction(&self) -> f64 {
        self.good_event.iter().filter(|g| **g).count() as f64 / self.good_event.len().max(1) as f64
    }

    pub fn design_norm_sum(&self) -> f64 {
        self.max_design_norm_sq.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct RegretTrace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub oracle_revenue: Vec<f64>,
    pub policy_revenue: Vec<f64>,
    pub instant_regret: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub diagnostics: Option<Diagnostics>,
    pub warnings: Vec<String>,
    pub wall_time: Duration,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    /// True when every recorded number (not the wall time) matches bit for bit.
    pub fn same_numbers(&self, other: &RegretTrace) -> bool {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        self.algorithm == other.algorithm
            && self.seed == other.seed
            && bits(&self.oracle_revenue) == bits(&other.oracle_revenue)
            && bits(&self.policy_revenue) == bits(&other.policy_revenue)
            && bits(&self.cumulative_regret) == bits(&other.cumulative_regret)
            && self.diagnostics.as_ref().map(|d| (d.tau.clone(), d.good_event.clone(), bits(&d.max_design_norm_sq)))
                == other
                    .diagnostics
                    .as_ref()
                    .map(|d| (d.tau.clone(), d.good_event.clone(), bits(&d.max_design_norm_sq)))
    }
}

/// Runs one episode of `config.horizon` rounds with an already-built policy.
pub fn run_episode(
    config: &ExperimentConfig,
    policy: &mut dyn Policy,
    instance: &Instance,
    user_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<RegretTrace> {
    config.validate()?;
    let start = Instant::now();
    let horizon = config.horizon;
    let noise = config.noise();
    let hp = config.hyper_params();
    let theta_star = instance.theta.stacked();

    let mut trace = RegretTrace {
        algorithm: config.algorithm,
        seed: instance.seed(),
        oracle_revenue: Vec::with_capacity(horizon),
        policy_revenue: Vec::with_capacity(horizon),
        instant_regret: Vec::with_capacity(horizon),
        cumulative_regret: Vec::with_capacity(horizon),
        diagnostics: None,
        warnings: Vec::new(),
        wall_time: Duration::ZERO,
    };
    let mut diag = Diagnostics { lambda: hp.lambda, ..Default::default() };
    let mut cumulative = 0.0;

    for (t, features) in (1..=horizon).zip(instance.feature_stream()) {
        let oracle = threshold_oracle(&features, &instance.theta, config.k)?;
        let oracle_rev = match &noise {
            Some(n) => expected_revenue(&features, &instance.theta, &oracle.offer, Some(n))?,
            None => oracle.value,
        };

        let decision = policy.act(t, &features)?;
        let offer = &decision.offer;
        offer.validate(features.n_arms(), config.k)?;
        let policy_rev = expected_revenue(&features, &instance.theta, offer, noise.as_ref())?;

        if config.record_diagnostics {
            if let Some(est) = policy.estimator() {
                diag.tau.push(est.tau());
                diag.good_event.push(est.distance_in_h(&theta_star) <= est.radius(&hp, t));
                let max_norm = offer
                    .arms
                    .iter()
                    .zip(&offer.prices)
                    .map(|(&a, &p)| est.h_factor().inv_quad(&features.z(a, p)))
                    .fold(0.0, f64::max);
                diag.max_design_norm_sq.push(max_norm);
                let kappa = kappa_contribution(&features, est.theta_hat(), offer)?;
                diag.kappa_contribution.push(kappa.unwrap_or(f64::NAN));
            }
        }

        let zeta: Option<Vec<f64>> = noise.map(|n| offer.arms.iter().map(|_| n.sample(user_rng)).collect());
        let dist = choice_probabilities(&features, &instance.theta, offer, zeta.as_deref())?;
        let chosen = sample_choice(&dist, user_rng);
        policy.observe(&features, offer, chosen)?;

        let regret = oracle_rev - policy_rev;
        cumulative += regret;
        trace.oracle_revenue.push(oracle_rev);
        trace.policy_revenue.push(policy_rev);
        trace.instant_regret.push(regret);
        trace.cumulative_regret.push(cumulative);
    }

    if let Some(est) = policy.estimator() {
        if config.record_diagnostics {
            diag.final_tau = est.tau();
            diag.final_refresh_log_det = est.logdet_at_last_update();
            trace.diagnostics = Some(diag);
        }
    }
    trace.warnings.extend(policy.warning());
    trace.wall_time = start.elapsed();
    Ok(trace)
}

/// Replication `rep`: a fresh instance and policy, both derived from the replication seed.
pub fn run_replication(config: &ExperimentConfig, rep: usize) -> Result<RegretTrace> {
    config.validate()?;
    let seed = replication_seed(config.base_seed, rep);
    let instance = generate_instance(config.n_arms, config.d, seed)?;
    let mut policy =
        build_policy(config.algorithm, &config.policy_settings(), &instance, stream_rng(seed, Stream::Policy))?;
    let mut user_rng = stream_rng(seed, Stream::User);
    run_episode(config, policy.as_mut(), &instance, &mut user_rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Per-round mean and spread across replications.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub n_arms: usize,
    pub seeds: Vec<u64>,
    pub regret_mean: Vec<f64>,
    pub regret_std: Vec<f64>,
    pub oracle_rev_mean: Vec<f64>,
    pub policy_rev_mean: Vec<f64>,
    pub tau_mean: Vec<f64>,
    pub good_event_frac: Vec<f64>,
    pub warnings: Vec<String>,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl Summary {
    /// Aggregates traces in the given (replication) order.
    pub fn from_traces(config: &ExperimentConfig, traces: &[RegretTrace]) -> Self {
        let horizon = config.horizon;
        let mut s = Summary {
            algorithm: config.algorithm,
            n_arms: config.n_arms,
            seeds: traces.iter().map(|t| t.seed).collect(),
            regret_mean: Vec::with_capacity(horizon),
            regret_std: Vec::with_capacity(horizon),
            oracle_rev_mean: Vec::with_capacity(horizon),
            policy_rev_mean: Vec::with_capacity(horizon),
            tau_mean: Vec::with_capacity(horizon),
            good_event_frac: Vec::with_capacity(horizon),
            warnings: traces
                .iter()
                .flat_map(|t| t.warnings.iter().map(move |w| format!("seed {}: {w}", t.seed)))
                .collect(),
        };
        let with_diag: Vec<&Diagnostics> = traces.iter().filter_map(|t| t.diagnostics.as_ref()).collect();
        for r in 0..horizon {
            let (m, sd) = mean_std(traces.iter().map(|t| t.cumulative_regret[r]));
            s.regret_mean.push(m);
            s.regret_std.push(sd);
            s.oracle_rev_mean.push(mean_std(traces.iter().map(|t| t.oracle_revenue[r])).0);
            s.policy_rev_mean.push(mean_std(traces.iter().map(|t| t.policy_revenue[r])).0);
            if with_diag.is_empty() {
                s.tau_mean.push(0.0);
                s.good_event_frac.push(f64::NAN);
            } else {
                s.tau_mean.push(mean_std(with_diag.iter().map(|d| d.tau[r] as f64)).0);
                s.good_event_frac.push(mean_std(with_diag.iter().map(|d| d.good_event[r] as u8 as f64)).0);
            }
        }
        s
    }

    pub fn final_regret_mean(&self) -> f64 {
        self.regret_mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_regret_std(&self) -> f64 {
        self.regret_std.last().copied().unwrap_or(0.0)
    }

    /// Mean cumulative regret after round `t` (1-based).
    pub fn regret_at(&self, t: usize) -> f64 {
        self.regret_mean[t - 1]
    }

    /// `t,regret_mean,regret_std,oracle_rev_mean,policy_rev_mean,tau_mean,good_event_frac`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("t,regret_mean,regret_std,oracle_rev_mean,policy_rev_mean,tau_mean,good_event_frac\n");
        for r in 0..self.regret_mean.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r + 1,
                fmt_full(self.regret_mean[r]),
                fmt_full(self.regret_std[r]),
                fmt_full(self.oracle_rev_mean[r]),
                fmt_full(self.policy_rev_mean[r]),
                fmt_full(self.tau_mean[r]),
                fmt_full(self.good_event_frac[r]),
            ));
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone)]
pub struct Replicated {
    pub summary: Summary,
    pub traces: Vec<RegretTrace>,
}

pub fn replicate(config: &ExperimentConfig, execution: Execution) -> Result<Replicated> {
    config.validate()?;
    let traces: Vec<RegretTrace> = match execution {
        Execution::Sequential => (0..config.replications).map(|r| run_replication(config, r)).collect::<Result<_>>()?,
        Execution::Parallel => {
            (0..config.replications).into_par_iter().map(|r| run_replication(config, r)).collect::<Result<_>>()?
        }
    };
    Ok(Replicated { summary: Summary::from_traces(config, &traces), traces })
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_arms: usize,
    pub result: Replicated,
}

/// One [`replicate`] per arm count, all sharing the base seed.
pub fn sweep(base: &ExperimentConfig, arm_counts: &[usize], execution: Execution) -> Result<Vec<SweepRow>> {
    if arm_counts.is_empty() {
        return Err(Error::Config { key: "N".into(), reason: "sweep needs at least one arm count".into() });
    }
    arm_counts
        .iter()
        .map(|&n| {
            let config = ExperimentConfig { n_arms: n, ..base.clone() };
            Ok(SweepRow { n_arms: n, result: replicate(&config, execution)? })
        })
        .collect()
}
