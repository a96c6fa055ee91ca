use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cmnl::harness::{fmt_full, replicate, Execution, Summary};
use cmnl::validation::{run_all, ValidationOptions};
use serde_json::{json, Value};

use crate::config::{self, RunSpec};
use crate::svg::{line_chart, Series};
use crate::CliError;

pub const VERSION: &str = env!("CMNL_VERSION");

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn load(path: &Path) -> Result<RunSpec, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    config::parse(&text)
}

struct RunOutput {
    summaries: Vec<Summary>,
    artifacts: Vec<PathBuf>,
}

/// Runs every algorithm of `spec` and writes traces plus a manifest under `out`.
/// A single algorithm writes `out/trace.csv`; several write `out/<name>/trace.csv`.
fn run_into(spec: &RunSpec, out: &Path) -> Result<RunOutput, CliError> {
    let start = Instant::now();
    let mut summaries = Vec::new();
    let mut artifacts = Vec::new();
    for &alg in &spec.algorithms {
        let replicated = replicate(&spec.config_for(alg), Execution::Parallel)?;
        let path =
            if spec.algorithms.len() == 1 { out.join("trace.csv") } else { out.join(alg.as_str()).join("trace.csv") };
        write(&path, &replicated.summary.to_csv())?;
        for w in &replicated.summary.warnings {
            eprintln!("warning: {w}");
        }
        artifacts.push(path);
        summaries.push(replicated.summary);
    }
    let manifest_path = out.join("manifest.json");
    artifacts.push(manifest_path.clone());
    let manifest = manifest(spec, &artifacts, out, start.elapsed().as_secs_f64(), &summaries);
    write(&manifest_path, &format!("{}\n", serde_json::to_string_pretty(&manifest).expect("plain JSON")))?;
    Ok(RunOutput { summaries, artifacts })
}

fn relative(path: &Path, root: &Path) -> String {
    path.strip_prefix(root).unwrap_or(path).display().to_string()
}

fn manifest(spec: &RunSpec, artifacts: &[PathBuf], root: &Path, wall: f64, summaries: &[Summary]) -> Value {
    let warnings: Vec<&String> = summaries.iter().flat_map(|s| &s.warnings).collect();
    json!({
        "version": VERSION,
        "config": spec.echo(),
        "seeds": spec.base.replication_seeds(),
        "artifacts": artifacts.iter().map(|p| relative(p, root)).collect::<Vec<_>>(),
        "wall_time_seconds": wall,
        "warnings": warnings,
    })
}

pub fn cmd_run(config: &Path, out: &Path) -> Result<(), CliError> {
    let spec = load(config)?;
    let result = run_into(&spec, out)?;
    for s in &result.summaries {
        println!(
            "{:<11} final regret {:.4} ± {:.4} over {} replications",
            s.algorithm.as_str(),
            s.final_regret_mean(),
            s.final_regret_std(),
            s.seeds.len()
        );
    }
    println!("wrote {} files to {}", result.artifacts.len(), out.display());
    Ok(())
}

pub fn cmd_sweep(config: &Path, arm_counts: Option<Vec<usize>>, out: &Path) -> Result<(), CliError> {
    let start = Instant::now();
    let spec = load(config)?;
    let arm_counts = arm_counts.unwrap_or_else(|| vec![spec.base.n_arms]);
    if arm_counts.is_empty() {
        return Err(CliError::Config("invalid config key `N`: sweep needs at least one value".into()));
    }
    let mut table = String::from("N,algorithm,final_regret_mean,final_regret_std\n");
    let mut series = Vec::new();
    let mut artifacts = Vec::new();
    let mut summaries = Vec::new();
    for &n in &arm_counts {
        let per_n = spec.with_arms(n);
        per_n.base.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let result = run_into(&per_n, &out.join(format!("N{n}")))?;
        artifacts.extend(result.artifacts);
        for s in result.summaries {
            table.push_str(&format!(
                "{n},{},{},{}\n",
                s.algorithm.as_str(),
                fmt_full(s.final_regret_mean()),
                fmt_full(s.final_regret_std())
            ));
            println!(
                "N={n:<4} {:<11} final regret {:.4} ± {:.4}",
                s.algorithm.as_str(),
                s.final_regret_mean(),
                s.final_regret_std()
            );
            series.push(Series { label: format!("{} N={n}", s.algorithm.as_str()), values: s.regret_mean.clone() });
            summaries.push(s);
        }
    }
    let sweep_csv = out.join("sweep.csv");
    write(&sweep_csv, &table)?;
    let svg_path = out.join("regret.svg");
    let title = format!("Mean cumulative regret (K={}, d={})", spec.base.k, spec.base.d);
    write(&svg_path, &line_chart(&title, "t", "cumulative regret", &series))?;
    artifacts.extend([sweep_csv, svg_path]);
    let manifest_path = out.join("manifest.json");
    artifacts.push(manifest_path.clone());
    let mut manifest = manifest(&spec, &artifacts, out, start.elapsed().as_secs_f64(), &summaries);
    manifest["sweep_N"] = json!(arm_counts);
    write(&manifest_path, &format!("{}\n", serde_json::to_string_pretty(&manifest).expect("plain JSON")))?;
    println!("wrote sweep to {}", out.display());
    Ok(())
}

/// Reads the `regret_mean` column of a trace file.
pub fn read_regret_column(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let column = header
        .split(',')
        .position(|h| h == "regret_mean")
        .ok_or_else(|| CliError::Io(format!("{}: no regret_mean column", path.display())))?;
    lines
        .map(|line| {
            line.split(',')
                .nth(column)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Io(format!("{}: malformed row `{line}`", path.display())))
        })
        .collect()
}

pub fn cmd_plot(traces: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let series = traces
        .iter()
        .map(|p| {
            let label = p
                .parent()
                .and_then(|d| d.file_name())
                .map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok(Series { label, values: read_regret_column(p)? })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    write(out, &line_chart("Mean cumulative regret", "t", "cumulative regret", &series))?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_validate(corrupt_gradient: bool) -> Result<(), CliError> {
    let opts = ValidationOptions { corrupt_gradient, ..Default::default() };
    let results = run_all(&opts);
    for r in &results {
        println!(
            "{}  {:<32} {:>7.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.elapsed.as_secs_f64(),
            r.detail
        );
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", results.len());
        Ok(())
    } else {
        Err(CliError::ChecksFailed(failed.join(", ")))
    }
}
