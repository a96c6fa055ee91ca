use cmnl::harness::{replicate, run_replication, sweep, Execution, ExperimentConfig};
use cmnl::policies::Algorithm;

fn paper_scale(algorithm: Algorithm) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(algorithm, 15, 2000);
    c.replications = 20;
    c.base_seed = 21;
    c.record_diagnostics = false;
    c
}

#[test]
fn random_baseline_regret_grows_linearly() {
    let s = replicate(&paper_scale(Algorithm::Random), Execution::Parallel).unwrap().summary;
    let ratio = s.regret_at(2000) / s.regret_at(1000);
    assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn regret_nonnegative_without_noise() {
    for alg in Algorithm::ALL {
        let mut c = ExperimentConfig::new(alg, 12, 300);
        c.base_seed = 22;
        let trace = run_replication(&c, 0).unwrap();
        assert_eq!(trace.instant_regret.len(), 300);
        assert!(trace.instant_regret.iter().all(|r| *r >= -1e-9), "{alg}");
        assert!(trace.cumulative_regret.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{alg}");
    }
}

#[test]
fn final_regret_grows_with_arm_count() {
    let base = paper_scale(Algorithm::UcbaLcbp);
    let rows = sweep(&base, &[10, 15, 20], Execution::Parallel).unwrap();
    assert_eq!(rows.iter().map(|r| r.n_arms).collect::<Vec<_>>(), vec![10, 15, 20]);
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0].result.summary, &pair[1].result.summary);
        let stderr = (a.final_regret_std().powi(2) + b.final_regret_std().powi(2)).sqrt() / (20f64).sqrt();
        assert!(
            b.final_regret_mean() >= a.final_regret_mean() - 2.0 * stderr,
            "N={} regret {} vs N={} regret {}",
            pair[0].n_arms,
            a.final_regret_mean(),
            pair[1].n_arms,
            b.final_regret_mean()
        );
    }
}

#[test]
fn summary_is_order_free_mean_of_traces() {
    let mut c = ExperimentConfig::new(Algorithm::TsaLcbp, 8, 100);
    c.k = 3;
    c.replications = 5;
    c.base_seed = 23;
    let r = replicate(&c, Execution::Sequential).unwrap();
    let mut reversed = r.traces.clone();
    reversed.reverse();
    let t = 99;
    let forward: f64 = r.traces.iter().map(|tr| tr.cumulative_regret[t]).sum::<f64>() / 5.0;
    let backward: f64 = reversed.iter().map(|tr| tr.cumulative_regret[t]).sum::<f64>() / 5.0;
    assert!((forward - backward).abs() < 1e-12);
    assert!((r.summary.regret_mean[t] - forward).abs() < 1e-12);
    assert_eq!(r.summary.seeds, c.replication_seeds());
}
