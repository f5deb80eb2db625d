//! Experiment plumbing: TOML configs, seeded scenario runs, metrics and a
//! manifest that hashes every file written.

mod config;
mod report;
mod scenarios;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

pub use config::{
    load_config, AdversarialSettings, BicycleSettings, ExperimentConfig, LoadedConfig, Overrides, ProbeSystem,
    RlSettings, Scenario, UncertaintySettings, UnbiasednessSettings,
};
pub use report::{aggregate, sha256_hex, Aggregate, ArtifactEntry, CheckResult, Manifest, MetricsReport, SeedMetrics};
pub use scenarios::{
    comparison_table, execute, probe_policies, Artifact, ComparisonRow, Outcome, ProbeResult, COMPARISON_HEADER,
    CORRECTION_LABEL, WORKERS_ENV,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAULT: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Process exit code for an error: 2 for configuration problems, 3 for
/// simulation and filter faults, 1 for anything else.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
        Error::Simulation { .. } | Error::Filter(_) => EXIT_FAULT,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

/// Result of a completed run, after everything was written to `out_dir`.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub outcome: Outcome,
    pub manifest: Manifest,
}

/// Writes the artifacts, `metrics.json`, the effective `config.toml` and
/// finally `manifest.json`, which lists all the others with their hashes.
pub fn write_outcome(outcome: &Outcome, loaded: &LoadedConfig, effective: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let effective_text =
        toml::to_string(effective).map_err(|e| Error::config(format!("cannot serialise effective config: {e}")))?;
    let mut metrics = serde_json::to_vec_pretty(&outcome.report)?;
    metrics.push(b'\n');
    let mut files: Vec<(&str, &[u8])> = outcome.artifacts.iter().map(|a| (a.name.as_str(), a.bytes.as_slice())).collect();
    files.push(("metrics.json", &metrics));
    files.push(("config.toml", effective_text.as_bytes()));
    let mut artifacts = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        fs::write(dir.join(name), bytes)?;
        artifacts.push(ArtifactEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: effective.scenario.name().to_string(),
        seeds: effective.seeds.clone(),
        config_path: loaded.path.display().to_string(),
        config_sha256: sha256_hex(loaded.text.as_bytes()),
        effective_config_sha256: sha256_hex(effective_text.as_bytes()),
        artifacts,
    };
    let mut text = serde_json::to_vec_pretty(&manifest)?;
    text.push(b'\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}

fn run_with(loaded: &LoadedConfig, overrides: &Overrides, required: Option<Scenario>) -> Result<RunSummary> {
    let mut cfg = loaded.config.clone();
    cfg.apply(overrides)?;
    if let Some(s) = required {
        if cfg.scenario != s {
            return Err(Error::config(format!(
                "{}: this command needs scenario {}, found {}",
                loaded.path.display(),
                s.name(),
                cfg.scenario.name()
            )));
        }
    }
    let outcome = execute(&cfg)?;
    let manifest = write_outcome(&outcome, loaded, &cfg, &cfg.output_dir)?;
    Ok(RunSummary { out_dir: cfg.output_dir.clone(), outcome, manifest })
}

/// Runs any scenario.
pub fn run(loaded: &LoadedConfig, overrides: &Overrides) -> Result<RunSummary> {
    run_with(loaded, overrides, None)
}

/// Runs the paired baseline comparison.
pub fn compare(loaded: &LoadedConfig, overrides: &Overrides) -> Result<RunSummary> {
    run_with(loaded, overrides, Some(Scenario::Baselines1d))
}

/// Runs policy-gradient training.
pub fn train(loaded: &LoadedConfig, overrides: &Overrides) -> Result<RunSummary> {
    run_with(loaded, overrides, Some(Scenario::Train4d))
}

/// A list of configs whose checks must all pass.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    /// Paths relative to the suite file.
    pub configs: Vec<PathBuf>,
    /// Each config writes to `<output_dir>/<config stem>`.
    #[serde(default = "default_suite_out")]
    pub output_dir: PathBuf,
}

fn default_suite_out() -> PathBuf {
    PathBuf::from("out/check")
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub runs: Vec<(PathBuf, RunSummary)>,
}

impl SuiteReport {
    pub fn checks(&self) -> impl Iterator<Item = &CheckResult> {
        self.runs.iter().flat_map(|(_, r)| r.outcome.report.checks.iter())
    }

    pub fn passed(&self) -> bool {
        self.checks().all(|c| c.passed)
    }
}

/// Runs every config of a suite file. `overrides.out` replaces the suite's
/// output root; the other overrides apply to each config.
pub fn check_suite(path: &Path, overrides: &Overrides) -> Result<SuiteReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let suite: Suite = toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
    if suite.configs.is_empty() {
        return Err(Error::config(format!("{}: suite lists no configs", path.display())));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let root = overrides.out.clone().unwrap_or(suite.output_dir);
    let loaded = suite.configs.iter().map(|c| load_config(&base.join(c))).collect::<Result<Vec<_>>>()?;
    let mut runs = Vec::with_capacity(loaded.len());
    for l in loaded {
        let stem = l.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let o = Overrides { out: Some(root.join(stem)), ..overrides.clone() };
        let summary = run(&l, &o)?;
        runs.push((l.path.clone(), summary));
    }
    Ok(SuiteReport { runs })
}
