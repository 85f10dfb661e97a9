//! Command-line front end: single experiments and parameter sweeps, written
//! out as CSV.

pub mod config;
pub mod report;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use spikewatch_core::{run_experiment, AggregateSeries, ExperimentConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "spikewatch", version, about = "Anomaly detection experiments over neuromorphic sensor networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment and write series.csv and summary.csv.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run one experiment per value of a config key.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        key: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Override a config entry; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl Common {
    fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        self.overrides.iter().map(|s| config::parse_override(s)).collect()
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let runtime = |e: std::io::Error| CliError::Runtime(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(runtime)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(runtime)?);
    body(&mut w).and_then(|_| w.flush()).map_err(runtime)
}

fn experiment(cfg: &ExperimentConfig) -> Result<AggregateSeries, CliError> {
    run_experiment(cfg).map_err(|e| CliError::Runtime(e.to_string()))
}

fn summary_text(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> String {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is ASCII")
}

fn run(path: &Path, common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = config::load(path, &common.overrides()?)?;
    let agg = experiment(&cfg)?;
    write_file(&common.out.join("series.csv"), |w| report::write_series(w, &agg))?;
    let summary = summary_text(|w| report::write_summary(w, &agg));
    write_file(&common.out.join("summary.csv"), |w| w.write_all(summary.as_bytes()))?;
    stdout.write_all(summary.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}

fn sweep(path: &Path, key: &str, values: &[String], common: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let key = key.trim().to_ascii_lowercase();
    if !config::KEYS.contains(&key.as_str()) || key == "q1" {
        return Err(CliError::Usage(format!("cannot sweep over {key:?}")));
    }
    let base = config::load(path, &common.overrides()?)?;
    let values: Vec<String> = values.iter().map(|v| v.trim().to_string()).collect();
    if values.iter().any(|v| v.is_empty() || v.contains(['/', '\\'])) {
        return Err(CliError::Usage(format!("invalid sweep values {values:?}")));
    }
    // Validate every point before running any of them.
    let mut configs = Vec::with_capacity(values.len());
    for (i, value) in values.iter().enumerate() {
        let mut cfg = base.clone();
        config::apply(&mut cfg, &key, value)?;
        cfg.seed = base.seed.wrapping_add(i as u64);
        cfg.validate().map_err(|e| CliError::Config(format!("{key}={value}: {e}")))?;
        configs.push(cfg);
    }
    let mut points = Vec::with_capacity(values.len());
    for (value, cfg) in values.into_iter().zip(&configs) {
        let agg = experiment(cfg)?;
        let dir = common.out.join(format!("sweep_{key}_{value}"));
        write_file(&dir.join("series.csv"), |w| report::write_series(w, &agg))?;
        points.push((value, agg));
    }
    let summary = summary_text(|w| report::write_sweep_summary(w, &key, &points));
    write_file(&common.out.join("summary.csv"), |w| w.write_all(summary.as_bytes()))?;
    stdout.write_all(summary.as_bytes()).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Executes a parsed command, printing the summary to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { config, common } => run(config, common, stdout),
        Command::Sweep { config, key, values, common } => sweep(config, key, values, common, stdout),
    }
}
