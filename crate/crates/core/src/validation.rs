//! Self-checks run by `cmnl validate`: derivative checks against finite
//! differences, assortment and oracle cross-checks, and run-level diagnostics.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::assortment::{brute_force, objective, solve, AssortmentProblem};
use crate::error::Result;
use crate::estimator::{gradient, gram, negative_log_likelihood, EstimatorState, GradientFn, HyperParams};
use crate::harness::ExperimentConfig;
use crate::model::{
    choice_probabilities, expected_revenue, generate_instance, sample_choice, Offer, RoundFeatures, Theta,
};
use crate::policies::oracle::{kkt_set_value, oracle_decision, threshold_oracle};
use crate::policies::{Algorithm, LcbUcbPolicy, Policy, PricingRule};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Default)]
pub struct ValidationOptions {
    /// Swap in a deliberately wrong gradient; the gradient check must then fail.
    pub corrupt_gradient: bool,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

type Check = fn(&ValidationOptions) -> Result<(bool, String)>;

fn corrupted_gradient(theta: &DVector<f64>, offer: &Offer, features: &RoundFeatures, y: usize) -> Result<DVector<f64>> {
    Ok(gradient(theta, offer, features, y)? * 1.01)
}

/// A random point of the parameter set with both blocks of norm at most 1.
pub fn random_theta(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let block = |rng: &mut ChaCha8Rng| {
        let v = DVector::from_iterator(d, (0..d).map(|_| rng.random_range(-1.0..1.0)));
        let r: f64 = rng.random();
        let n = v.norm();
        if n > 0.0 {
            v * (r / n)
        } else {
            v
        }
    };
    let a = block(rng);
    let b = block(rng);
    crate::model::stack(&a, &b)
}

/// Random round, offer and outcome for derivative checks.
pub fn random_case(rng: &mut ChaCha8Rng) -> (RoundFeatures, Offer, DVector<f64>, usize) {
    let n = rng.random_range(1..=8);
    let d = rng.random_range(1..=4);
    let inst = generate_instance(n, d, rng.random()).expect("valid sizes");
    let features = inst.feature_stream().next().expect("infinite stream");
    let k = rng.random_range(1..=n);
    let arms = rand::seq::index::sample(rng, n, k).into_vec();
    let prices = arms.iter().map(|_| rng.random_range(0.0..1.5)).collect();
    let offer = Offer::new(arms, prices).expect("distinct arms");
    let theta = random_theta(rng, d);
    let y = rng.random_range(0..=k);
    (features, offer, theta, y)
}

fn check_gradient(opts: &ValidationOptions) -> Result<(bool, String)> {
    let grad_fn: GradientFn = if opts.corrupt_gradient { corrupted_gradient } else { gradient };
    let mut rng = stream_rng(opts.seed ^ 0x6772, Stream::Policy);
    let h = 1e-6;
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (f, offer, theta, y) = random_case(&mut rng);
        let g = grad_fn(&theta, &offer, &f, y)?;
        let mut fd = DVector::zeros(theta.len());
        for j in 0..theta.len() {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += h;
            minus[j] -= h;
            fd[j] = (negative_log_likelihood(&plus, &offer, &f, y)? - negative_log_likelihood(&minus, &offer, &f, y)?)
                / (2.0 * h);
        }
        let rel = (&g - &fd).norm() / fd.norm().max(1e-6);
        worst = worst.max(rel);
    }
    Ok((worst < 1e-5, format!("max relative error {worst:.2e} (tol 1e-5)")))
}

fn check_hessian(opts: &ValidationOptions) -> Result<(bool, String)> {
    let mut rng = stream_rng(opts.seed ^ 0x6865, Stream::Policy);
    let h = 1e-4;
    let mut worst = 0.0_f64;
    let mut min_eig = f64::INFINITY;
    for _ in 0..100 {
        let (f, offer, theta, y) = random_case(&mut rng);
        let g = gram(&theta, &offer, &f)?;
        min_eig = min_eig.min(g.clone().symmetric_eigenvalues().min());
        let fd = fd_hessian(&theta, h, |th| negative_log_likelihood(th, &offer, &f, y))?;
        worst = worst.max((&g - fd).amax());
    }
    Ok((
        worst < 1e-4 && min_eig >= -1e-10,
        format!("max entry error {worst:.2e} (tol 1e-4), min eigenvalue {min_eig:.2e}"),
    ))
}

fn fd_hessian(theta: &DVector<f64>, h: f64, f: impl Fn(&DVector<f64>) -> Result<f64>) -> Result<DMatrix<f64>> {
    let n = theta.len();
    let mut out = DMatrix::zeros(n, n);
    let eval = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut th = theta.clone();
        th[di] += si * h;
        th[dj] += sj * h;
        f(&th)
    };
    for i in 0..n {
        for j in i..n {
            let v = (eval(i, 1.0, j, 1.0)? - eval(i, 1.0, j, -1.0)? - eval(i, -1.0, j, 1.0)? + eval(i, -1.0, j, -1.0)?)
                / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

fn check_assortment(opts: &ValidationOptions) -> Result<(bool, String)> {
    let mut rng = stream_rng(opts.seed ^ 0x6173, Stream::Policy);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let k = rng.random_range(1..=5);
        let r = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let u = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = AssortmentProblem::new(r, u, k)?;
        let fast = solve(&p);
        let exact = brute_force(&p)?;
        worst = worst.max((fast.value - exact.value).abs());
        worst = worst.max((objective(&fast.set, &p) - fast.value).abs());
    }
    Ok((worst < 1e-9, format!("max value gap {worst:.2e} over 1000 problems (tol 1e-9)")))
}

/// Per-set grid search compared with the KKT fixed point, and the fast oracle
/// compared with exhaustive enumeration.
fn check_oracle(opts: &ValidationOptions) -> Result<(bool, String)> {
    let mut rng = stream_rng(opts.seed ^ 0x6f72, Stream::Policy);
    let mut worst_grid = 0.0_f64;
    let mut worst_fast = 0.0_f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(1..=3);
        let d = rng.random_range(1..=4);
        let inst = generate_instance(n, d, rng.random())?;
        let f = inst.feature_stream().next().expect("infinite stream");
        let exhaustive = oracle_decision(&f, &inst.theta, k, crate::policies::oracle::DEFAULT_GRID)?;
        let fast = threshold_oracle(&f, &inst.theta, k)?;
        worst_fast = worst_fast.max((exhaustive.value - fast.value).abs());
        if let Some((_, kkt)) = kkt_set_value(&f, &inst.theta, &exhaustive.offer.arms) {
            worst_grid = worst_grid.max((exhaustive.value - kkt).abs());
        }
    }
    Ok((
        worst_grid < 1e-3 && worst_fast < 1e-8,
        format!("KKT vs grid gap {worst_grid:.2e} (tol 1e-3); fast vs exhaustive gap {worst_fast:.2e}"),
    ))
}

fn pinned_policy(hp: &HyperParams, theta: &Theta) -> Result<LcbUcbPolicy> {
    let est = EstimatorState::pinned(hp, theta.stacked())?;
    Ok(LcbUcbPolicy::with_estimator(hp.clone(), PricingRule::Lcb, est))
}

fn check_good_event(opts: &ValidationOptions) -> Result<(bool, String)> {
    let (n, k, d, horizon) = (10, 5, 4, 500);
    let hp = HyperParams::new(d, k, n, horizon);
    let inst = generate_instance(n, d, opts.seed ^ 0x6765)?;
    let mut policy = pinned_policy(&hp, &inst.theta)?;
    let mut user = stream_rng(inst.seed(), Stream::User);
    let mut violations = 0usize;
    let mut censored = 0usize;
    for (t, f) in (1..=horizon).zip(inst.feature_stream()) {
        let dec = policy.act(t, &f)?;
        for i in 0..n {
            let v = f.valuation(i, &inst.theta);
            if !(dec.lcb_v[i].max(0.0) <= v && v <= dec.reward_index[i]) {
                violations += 1;
            }
        }
        for (&a, &p) in dec.offer.arms.iter().zip(&dec.offer.prices) {
            if p > f.valuation(a, &inst.theta) {
                censored += 1;
            }
        }
        let dist = choice_probabilities(&f, &inst.theta, &dec.offer, None)?;
        policy.observe(&f, &dec.offer, sample_choice(&dist, &mut user))?;
    }
    Ok((
        violations == 0 && censored == 0,
        format!("{violations} bound violations, {censored} censored offers over {horizon} rounds"),
    ))
}

fn check_zero_radius(opts: &ValidationOptions) -> Result<(bool, String)> {
    let (n, k, d, horizon) = (10, 5, 4, 300);
    let mut hp = HyperParams::new(d, k, n, horizon);
    hp.c1 = 0.0;
    let inst = generate_instance(n, d, opts.seed ^ 0x7a72)?;
    let stacked = inst.theta.stacked();
    let mut policy = pinned_policy(&hp, &inst.theta)?;
    let mut user = stream_rng(inst.seed(), Stream::User);
    let mut worst = 0.0_f64;
    for (t, f) in (1..=horizon).zip(inst.feature_stream()) {
        let dec = policy.act(t, &f)?;
        let v: Vec<f64> = (0..n).map(|i| f.valuation(i, &inst.theta)).collect();
        let u = (0..n).map(|i| f.utility(i, v[i], &stacked)).collect();
        let restricted = solve(&AssortmentProblem::new(v, u, k)?).value;
        let earned = expected_revenue(&f, &inst.theta, &dec.offer, None)?;
        worst = worst.max((earned - restricted).abs());
        let dist = choice_probabilities(&f, &inst.theta, &dec.offer, None)?;
        policy.observe(&f, &dec.offer, sample_choice(&dist, &mut user))?;
    }
    Ok((worst < 1e-9, format!("max gap to the p = v oracle {worst:.2e}")))
}

fn diagnostic_run(opts: &ValidationOptions, algorithm: Algorithm) -> Result<crate::harness::RegretTrace> {
    let mut config = ExperimentConfig::new(algorithm, 10, 1000);
    config.base_seed = opts.seed;
    crate::harness::run_replication(&config, 0)
}

/// `sum_t max_i ||z||^2_{H_t^{-1}} <= (4d / kappa) log(1 + 2TK / (d lambda))`.
pub fn elliptical_potential_bound(d: usize, k: usize, horizon: usize, lambda: f64, kappa: f64) -> f64 {
    let (d, k, t) = (d as f64, k as f64, horizon as f64);
    4.0 * d / kappa * (1.0 + 2.0 * t * k / (d * lambda)).ln()
}

/// `2d log2(1 + 2TK / (d lambda)) + 2`.
pub fn update_count_bound(d: usize, k: usize, horizon: usize, lambda: f64) -> f64 {
    let (d, k, t) = (d as f64, k as f64, horizon as f64);
    2.0 * d * (1.0 + 2.0 * t * k / (d * lambda)).log2() + 2.0
}

fn check_potential_and_updates(opts: &ValidationOptions) -> Result<(bool, String)> {
    let mut ok = true;
    let mut notes = Vec::new();
    for alg in [Algorithm::UcbaLcbp, Algorithm::TsaLcbp] {
        let config = ExperimentConfig { base_seed: opts.seed, ..ExperimentConfig::new(alg, 10, 1000) };
        let trace = diagnostic_run(opts, alg)?;
        let diag = trace.diagnostics.expect("estimator policies record diagnostics");
        let kappa = diag.empirical_kappa().unwrap_or(f64::NAN);
        let lhs = diag.design_norm_sum();
        let rhs = elliptical_potential_bound(config.d, config.k, config.horizon, diag.lambda, kappa);
        let tau_bound = update_count_bound(config.d, config.k, config.horizon, diag.lambda);
        let det_ratio = diag.final_refresh_log_det - 2.0 * config.d as f64 * diag.lambda.ln();
        let audit = (diag.final_tau as f64 - 1.0) * config.c_trigger.ln() <= det_ratio + 1e-9;
        ok &= lhs <= rhs && (diag.final_tau as f64) <= tau_bound && audit;
        notes.push(format!("{alg}: potential {lhs:.3e} <= {rhs:.3e}, tau {} <= {tau_bound:.1}", diag.final_tau));
    }
    Ok((ok, notes.join("; ")))
}

pub const CHECK_NAMES: [&str; 7] = [
    "gradient-finite-difference",
    "gram-hessian-finite-difference",
    "assortment-vs-brute-force",
    "oracle-kkt-vs-grid",
    "good-event-injected",
    "zero-radius-collapse",
    "potential-and-update-count",
];

pub fn run_all(opts: &ValidationOptions) -> Vec<CheckResult> {
    let checks: [Check; 7] = [
        check_gradient,
        check_hessian,
        check_assortment,
        check_oracle,
        check_good_event,
        check_zero_radius,
        check_potential_and_updates,
    ];
    CHECK_NAMES
        .iter()
        .zip(checks)
        .map(|(name, check)| {
            let start = Instant::now();
            let (passed, detail) = match check(opts) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult { name, passed, detail, elapsed: start.elapsed() }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_gradient_is_caught() {
        let opts = ValidationOptions { corrupt_gradient: true, seed: 1 };
        let (ok, detail) = check_gradient(&opts).unwrap();
        assert!(!ok, "{detail}");
        let (ok, detail) = check_gradient(&ValidationOptions::default()).unwrap();
        assert!(ok, "{detail}");
    }

    #[test]
    fn hessian_check_passes() {
        let (ok, detail) = check_hessian(&ValidationOptions::default()).unwrap();
        assert!(ok, "{detail}");
    }

    #[test]
    fn bounds_closed_forms() {
        assert!((update_count_bound(4, 5, 2000, 4.0) - (8.0 * (1.0 + 20000.0 / 16.0f64).log2() + 2.0)).abs() < 1e-12);
        assert!(elliptical_potential_bound(4, 5, 2000, 1000.0, 0.01) > 0.0);
    }
}
