use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cmnl");

fn smoke_config(algorithm: &str) -> String {
    format!("N = 6\nK = 3\nd = 4\nT = 10\nalgorithm = {algorithm}\nreplications = 1\nbase_seed = 11\n")
}

fn cmnl(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("CMNL_THREADS", "2").output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn smoke_run_writes_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &smoke_config("\"ucba-lcbp\""));
    let out = dir.path().join("out");
    let o = cmnl(&["run", "--config", &config, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,regret_mean,regret_std,oracle_rev_mean,policy_rev_mean,tau_mean,good_event_frac");
    assert_eq!(lines.len(), 11);
    assert!(lines[1..]
        .iter()
        .enumerate()
        .all(|(i, l)| l.starts_with(&format!("{},", i + 1)) && l.split(',').count() == 7));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["K"], 3);
    assert_eq!(manifest["seeds"].as_array().unwrap().len(), 1);
    assert!(manifest["version"].as_str().is_some_and(|v| !v.is_empty()));
    assert!(manifest["wall_time_seconds"].as_f64().is_some());
    for artifact in manifest["artifacts"].as_array().unwrap() {
        assert!(out.join(artifact.as_str().unwrap()).exists(), "{artifact}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &smoke_config("[\"tsa-lcbp\", \"etc\"]").replace("replications = 1", "replications = 3"),
    );
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        assert!(cmnl(&["run", "--config", &config, "--out", out.to_str().unwrap()]).status.success());
        outputs.push(out);
    }
    for alg in ["tsa-lcbp", "etc"] {
        let a = fs::read(outputs[0].join(alg).join("trace.csv")).unwrap();
        let b = fs::read(outputs[1].join(alg).join("trace.csv")).unwrap();
        assert_eq!(a, b, "{alg}");
    }
}

#[test]
fn config_errors_exit_2_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (smoke_config("\"random\"").replace("K = 3\n", ""), "K"),
        (smoke_config("\"random\"") + "bogus = 1\n", "bogus"),
        (smoke_config("\"random\"").replace("T = 10", "T = 0"), "T"),
        (smoke_config("\"nope\""), "algorithm"),
    ];
    for (text, key) in cases {
        let config = write_config(dir.path(), &text);
        let o = cmnl(&["run", "--config", &config, "--out", dir.path().join("x").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{key}");
        assert!(stderr(&o).contains(&format!("`{key}`")), "{key}: {}", stderr(&o));
    }
    let o = cmnl(&["run", "--config", "/nonexistent/config.toml", "--out", "/tmp"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &smoke_config("\"random\""));
    let o = Command::new(BIN)
        .args(["run", "--config", &config, "--out", dir.path().join("x").to_str().unwrap()])
        .env("CMNL_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CMNL_THREADS"));
}

#[test]
fn sweep_rows_svg_and_consistency() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &smoke_config("\"ucba-lcbp, random\"").replace("replications = 1", "replications = 2"),
    );
    let out = dir.path().join("sweep");
    let o = cmnl(&["sweep", "--config", &config, "--N", "6,9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<Vec<&str>> = table.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(table.lines().next().unwrap(), "N,algorithm,final_regret_mean,final_regret_std");
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let trace = fs::read_to_string(out.join(format!("N{}", row[0])).join(row[1]).join("trace.csv")).unwrap();
        let last: Vec<&str> = trace.lines().last().unwrap().split(',').collect();
        assert_eq!(last[0], "10");
        assert_eq!(row[2], last[1], "mean for {row:?}");
        assert_eq!(row[3], last[2], "std for {row:?}");
    }

    let svg = fs::read_to_string(out.join("regret.svg")).unwrap();
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(svg.matches("<polyline").count(), 4);
    assert_eq!(svg.matches("<polyline").count(), svg.matches("</polyline>").count());
    assert_eq!(svg.matches('<').count(), svg.matches('>').count());

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["sweep_N"], serde_json::json!([6, 9]));
    for artifact in manifest["artifacts"].as_array().unwrap() {
        assert!(out.join(artifact.as_str().unwrap()).exists(), "{artifact}");
    }
}

#[test]
fn plot_reads_traces() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &smoke_config("\"random\""));
    let out = dir.path().join("run");
    assert!(cmnl(&["run", "--config", &config, "--out", out.to_str().unwrap()]).status.success());
    let svg = dir.path().join("chart.svg");
    let trace = out.join("trace.csv");
    let o = cmnl(&["plot", trace.to_str().unwrap(), "--out", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(svg).unwrap().matches("<polyline").count(), 1);
}

#[test]
fn validate_exit_codes() {
    let clean = cmnl(&["validate"]);
    let text = String::from_utf8_lossy(&clean.stdout);
    assert_eq!(clean.status.code(), Some(0), "{text}");
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 7);

    let faulty = Command::new(BIN).arg("validate").env("CMNL_VALIDATE_FAULT", "gradient").output().unwrap();
    assert_eq!(faulty.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&faulty.stdout).contains("FAIL  gradient-finite-difference"));
    assert!(stderr(&faulty).contains("gradient-finite-difference"));
}
