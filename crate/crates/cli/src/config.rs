//! Flat TOML experiment configs.
//!
//! ```toml
//! N = 15
//! K = 5
//! d = 4
//! T = 2000
//! algorithm = ["ucba-lcbp", "tsa-lcbp", "etc", "random"]
//! replications = 20
//! base_seed = 42
//! ```

use cmnl::harness::ExperimentConfig;
use cmnl::policies::Algorithm;
use serde_json::{json, Value};
use toml::{Table, Value as TomlValue};

use crate::CliError;

const REQUIRED: [&str; 7] = ["N", "K", "d", "T", "algorithm", "replications", "base_seed"];
const OPTIONAL: [&str; 6] = ["C1", "C", "M", "ts_utility_scale", "noise_c", "record_diagnostics"];

/// A parsed config: shared settings plus one or more algorithms to run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub base: ExperimentConfig,
    pub algorithms: Vec<Algorithm>,
}

impl RunSpec {
    pub fn config_for(&self, algorithm: Algorithm) -> ExperimentConfig {
        ExperimentConfig { algorithm, ..self.base.clone() }
    }

    pub fn with_arms(&self, n_arms: usize) -> RunSpec {
        RunSpec { base: ExperimentConfig { n_arms, ..self.base.clone() }, algorithms: self.algorithms.clone() }
    }

    /// The resolved config in the same flat shape it was read in.
    pub fn echo(&self) -> Value {
        let c = &self.base;
        json!({
            "N": c.n_arms,
            "K": c.k,
            "d": c.d,
            "T": c.horizon,
            "algorithm": self.algorithms.iter().map(|a| a.as_str()).collect::<Vec<_>>(),
            "replications": c.replications,
            "base_seed": c.base_seed,
            "C1": c.c1,
            "C": c.c_trigger,
            "M": c.resolved_samples(),
            "ts_utility_scale": c.policy_settings().ts.utility_scale,
            "noise_c": c.noise_c,
            "record_diagnostics": c.record_diagnostics,
        })
    }
}

fn bad(key: &str, reason: impl Into<String>) -> CliError {
    CliError::Config(cmnl::Error::Config { key: key.into(), reason: reason.into() }.to_string())
}

fn integer(table: &Table, key: &str) -> Result<Option<i64>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(TomlValue::Integer(i)) => Ok(Some(*i)),
        Some(other) => Err(bad(key, format!("expected an integer, found {}", other.type_str()))),
    }
}

fn count(table: &Table, key: &str) -> Result<Option<usize>, CliError> {
    integer(table, key)?.map(|i| usize::try_from(i).map_err(|_| bad(key, "must be nonnegative"))).transpose()
}

fn real(table: &Table, key: &str) -> Result<Option<f64>, CliError> {
    match table.get(key) {
        None => Ok(None),
        Some(TomlValue::Float(x)) => Ok(Some(*x)),
        Some(TomlValue::Integer(i)) => Ok(Some(*i as f64)),
        Some(other) => Err(bad(key, format!("expected a number, found {}", other.type_str()))),
    }
}

fn algorithms(value: &TomlValue) -> Result<Vec<Algorithm>, CliError> {
    let names: Vec<&str> = match value {
        TomlValue::String(s) => s.split(',').map(str::trim).collect(),
        TomlValue::Array(items) => items
            .iter()
            .map(|v| v.as_str().ok_or_else(|| bad("algorithm", "array entries must be strings")))
            .collect::<Result<_, _>>()?,
        other => return Err(bad("algorithm", format!("expected a string or array, found {}", other.type_str()))),
    };
    let mut out: Vec<Algorithm> = Vec::new();
    for name in names {
        let alg: Algorithm = name.parse().map_err(|e: cmnl::Error| CliError::Config(e.to_string()))?;
        if out.contains(&alg) {
            return Err(bad("algorithm", format!("`{name}` listed twice")));
        }
        out.push(alg);
    }
    if out.is_empty() {
        return Err(bad("algorithm", "no algorithm given"));
    }
    Ok(out)
}

pub fn parse(text: &str) -> Result<RunSpec, CliError> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(format!("malformed config: {e}")))?;
    if let Some(key) = table.keys().find(|k| !REQUIRED.contains(&k.as_str()) && !OPTIONAL.contains(&k.as_str())) {
        return Err(bad(key, "unknown key"));
    }
    if let Some(key) = REQUIRED.iter().find(|k| !table.contains_key(**k)) {
        return Err(bad(key, "missing required key"));
    }

    let required = |key: &str| count(&table, key).map(|v| v.expect("presence checked above"));
    let algorithms = algorithms(&table["algorithm"])?;
    let mut base = ExperimentConfig::new(algorithms[0], required("N")?, required("T")?);
    base.k = required("K")?;
    base.d = required("d")?;
    base.replications = required("replications")?;
    base.base_seed = match &table["base_seed"] {
        // TOML integers are signed; reinterpret so the full u64 range is reachable.
        TomlValue::Integer(i) => *i as u64,
        other => return Err(bad("base_seed", format!("expected an integer, found {}", other.type_str()))),
    };
    if let Some(c1) = real(&table, "C1")? {
        base.c1 = c1;
    }
    if let Some(c) = real(&table, "C")? {
        base.c_trigger = c;
    }
    base.samples = count(&table, "M")?;
    base.ts_utility_scale = real(&table, "ts_utility_scale")?;
    if let Some(c) = real(&table, "noise_c")? {
        base.noise_c = c;
    }
    match table.get("record_diagnostics") {
        None => {}
        Some(TomlValue::Boolean(b)) => base.record_diagnostics = *b,
        Some(other) => {
            return Err(bad("record_diagnostics", format!("expected a boolean, found {}", other.type_str())))
        }
    }
    base.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(RunSpec { base, algorithms })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "N = 6\nK = 2\nd = 3\nT = 10\nalgorithm = \"random\"\nreplications = 1\nbase_seed = 7\n";

    fn message(text: &str) -> String {
        match parse(text) {
            Err(CliError::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config() {
        let spec = parse(MINIMAL).unwrap();
        assert_eq!(spec.algorithms, vec![Algorithm::Random]);
        assert_eq!((spec.base.n_arms, spec.base.k, spec.base.d, spec.base.horizon), (6, 2, 3, 10));
        assert_eq!(spec.base.c1, 0.05);
        assert_eq!(spec.base.c_trigger, 2.0);
    }

    #[test]
    fn algorithm_lists() {
        let spec = parse(&MINIMAL.replace("\"random\"", "\"etc, random\"")).unwrap();
        assert_eq!(spec.algorithms, vec![Algorithm::Etc, Algorithm::Random]);
        let spec = parse(&MINIMAL.replace("\"random\"", "[\"ucba-lcbp\", \"tsa-lcbp\"]")).unwrap();
        assert_eq!(spec.algorithms, vec![Algorithm::UcbaLcbp, Algorithm::TsaLcbp]);
        assert!(message(&MINIMAL.replace("\"random\"", "\"random,random\"")).contains("algorithm"));
        assert!(message(&MINIMAL.replace("\"random\"", "\"greedy\"")).contains("algorithm"));
    }

    #[test]
    fn errors_name_the_key() {
        assert!(message(&MINIMAL.replace("K = 2\n", "")).contains("`K`"));
        assert!(message(&format!("{MINIMAL}lambda = 3\n")).contains("`lambda`"));
        assert!(message(&MINIMAL.replace("K = 2", "K = 9")).contains("`K`"));
        assert!(message(&MINIMAL.replace("T = 10", "T = \"ten\"")).contains("`T`"));
        assert!(message(&format!("{MINIMAL}C = 0.5\n")).contains("`C`"));
        assert!(message(&format!("{MINIMAL}record_diagnostics = 1\n")).contains("record_diagnostics"));
        assert!(message("N = ").contains("malformed"));
    }

    #[test]
    fn optional_overrides() {
        let text = format!(
            "{MINIMAL}C1 = 0.1\nC = 3\nM = 4\nts_utility_scale = 1.5\nnoise_c = 0.2\nrecord_diagnostics = false\n"
        );
        let spec = parse(&text).unwrap();
        let c = &spec.base;
        assert_eq!((c.c1, c.c_trigger, c.samples, c.ts_utility_scale, c.noise_c), (0.1, 3.0, Some(4), Some(1.5), 0.2));
        assert!(!c.record_diagnostics);
        assert_eq!(spec.echo()["M"], 4);
    }

    #[test]
    fn full_range_seed() {
        let spec = parse(&MINIMAL.replace("base_seed = 7", "base_seed = -1")).unwrap();
        assert_eq!(spec.base.base_seed, u64::MAX);
    }
}
