//! Flat `key = value` experiment files.
//!
//! Lines are `key = value`; `#` starts a comment. Keys absent from the file
//! keep their default values, and a repeated key keeps its last value.

use std::fs;
use std::path::Path;

use spikewatch_core::ExperimentConfig;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "k",
    "delta",
    "eta",
    "l",
    "alpha",
    "runs",
    "q0",
    "pi1",
    "eps01",
    "eps10",
    "delta_max",
    "c_max",
    "frames",
    "seed",
    "scheduler",
    "threshold",
    "q1",
];

/// Parsed `key = value` pairs in file order.
pub fn parse(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key = value, got {line:?}", i + 1)))?;
        entries.push((key.trim().to_ascii_lowercase(), value.trim().to_string()));
    }
    Ok(entries)
}

/// Splits a `--set key=value` override.
pub fn parse_override(arg: &str) -> Result<(String, String), CliError> {
    let (key, value) =
        arg.split_once('=').ok_or_else(|| CliError::Usage(format!("override {arg:?} is not of the form key=value")))?;
    Ok((key.trim().to_ascii_lowercase(), value.trim().to_string()))
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

/// Sets one field of `cfg`.
pub fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), CliError> {
    match key {
        "k" => cfg.nodes = number(key, value)?,
        "delta" => cfg.delta = number(key, value)?,
        "eta" => cfg.eta = number(key, value)?,
        "l" => cfg.slots = number(key, value)?,
        "alpha" => cfg.alpha = number(key, value)?,
        "runs" => cfg.runs = number(key, value)?,
        "q0" => cfg.q0 = number(key, value)?,
        "pi1" => cfg.pi1 = number(key, value)?,
        "eps01" => cfg.eps01 = number(key, value)?,
        "eps10" => cfg.eps10 = number(key, value)?,
        "delta_max" => cfg.delta_max = number(key, value)?,
        "c_max" => cfg.c_max = number(key, value)?,
        "frames" => cfg.frames = number(key, value)?,
        "seed" => cfg.seed = number(key, value)?,
        "scheduler" => cfg.scheduler = value.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))?,
        "threshold" => cfg.threshold = value.parse().map_err(|e| CliError::Config(format!("{key}: {e}")))?,
        "q1" => {
            cfg.q1_overrides = if value.is_empty() || value == "none" {
                None
            } else {
                Some(value.split(',').map(|v| number(key, v.trim())).collect::<Result<_, _>>()?)
            }
        }
        _ => return Err(CliError::Config(format!("unknown key {key:?}; expected one of {}", KEYS.join(", ")))),
    }
    Ok(())
}

/// Defaults, then the file, then the overrides; the result is validated.
pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<ExperimentConfig, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::default();
    for (key, value) in parse(&text)?.iter().chain(overrides) {
        apply(&mut cfg, key, value)?;
    }
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use spikewatch_core::{SchedulerKind, ThresholdKind};

    #[test]
    fn parses_comments_and_blank_lines() {
        let text = "# defaults\nk = 3\n\nL=25 # slots\n  threshold = fixed\n";
        let entries = parse(text).unwrap();
        assert_eq!(
            entries,
            vec![("k".into(), "3".into()), ("l".into(), "25".into()), ("threshold".into(), "fixed".into())]
        );
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(parse("k 3"), Err(CliError::Config(_))));
        assert!(matches!(parse_override("k"), Err(CliError::Usage(_))));
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = ExperimentConfig::default();
        let values = [
            ("k", "2"),
            ("delta", "0.9"),
            ("eta", "0.5"),
            ("l", "30"),
            ("alpha", "0.05"),
            ("runs", "7"),
            ("q0", "0.2"),
            ("pi1", "0.1"),
            ("eps01", "0.01"),
            ("eps10", "0.02"),
            ("delta_max", "0.3"),
            ("c_max", "2"),
            ("frames", "11"),
            ("seed", "5"),
            ("scheduler", "random"),
            ("threshold", "fixed"),
            ("q1", "0.3, 0.4"),
        ];
        assert_eq!(values.len(), KEYS.len());
        for (k, v) in values {
            apply(&mut cfg, k, v).unwrap();
        }
        let expected = ExperimentConfig {
            nodes: 2,
            delta: 0.9,
            eta: 0.5,
            slots: 30,
            alpha: 0.05,
            runs: 7,
            q0: 0.2,
            pi1: 0.1,
            eps01: 0.01,
            eps10: 0.02,
            delta_max: 0.3,
            c_max: 2,
            frames: 11,
            seed: 5,
            scheduler: SchedulerKind::Random,
            threshold: ThresholdKind::Fixed,
            q1_overrides: Some(vec![0.3, 0.4]),
        };
        assert_eq!(cfg, expected);
        apply(&mut cfg, "q1", "none").unwrap();
        assert_eq!(cfg.q1_overrides, None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut cfg = ExperimentConfig::default();
        assert!(matches!(apply(&mut cfg, "gamma", "1"), Err(CliError::Config(_))));
        assert!(matches!(apply(&mut cfg, "k", "two"), Err(CliError::Config(_))));
        assert!(matches!(apply(&mut cfg, "scheduler", "greedy"), Err(CliError::Config(_))));
    }
}
