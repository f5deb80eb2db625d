use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Named scalar metrics of one seed. Non-finite values serialise as `null`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub values: BTreeMap<String, f64>,
}

impl SeedMetrics {
    pub fn new(seed: u64) -> Self {
        Self { seed, values: BTreeMap::new() }
    }

    pub fn set(&mut self, key: &str, v: f64) -> &mut Self {
        self.values.insert(key.to_string(), v);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// Mean and sample standard deviation over the finite per-seed values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = finite.len();
    if n == 0 {
        return Aggregate { mean: f64::NAN, std: f64::NAN, n };
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let std = if n > 1 {
        (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    Aggregate { mean, std, n }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<SeedMetrics>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub checks: Vec<CheckResult>,
    /// Scenario-specific detail that does not fit the scalar table.
    pub extra: serde_json::Value,
}

impl MetricsReport {
    /// Builds the aggregates from `per_seed`; keys missing in some seeds are
    /// aggregated over the seeds that have them.
    pub fn new(scenario: &str, per_seed: Vec<SeedMetrics>, checks: Vec<CheckResult>, extra: serde_json::Value) -> Self {
        let mut keys: Vec<&String> = per_seed.iter().flat_map(|s| s.values.keys()).collect();
        keys.sort();
        keys.dedup();
        let aggregate = keys
            .into_iter()
            .map(|k| {
                let vals: Vec<f64> = per_seed.iter().filter_map(|s| s.values.get(k).copied()).collect();
                (k.clone(), aggregate(&vals))
            })
            .collect();
        Self { scenario: scenario.to_string(), seeds: per_seed.iter().map(|s| s.seed).collect(), per_seed, aggregate, checks, extra }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn mean(&self, key: &str) -> Option<f64> {
        self.aggregate.get(key).map(|a| a.mean)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub config_path: String,
    pub config_sha256: String,
    /// Hash of the effective config after command-line overrides.
    pub effective_config_sha256: String,
    pub artifacts: Vec<ArtifactEntry>,
}

impl Manifest {
    /// Re-hashes every listed artifact under `dir` and returns the paths whose
    /// content no longer matches.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let bytes = fs::read(dir.join(&a.path))?;
            if sha256_hex(&bytes) != a.sha256 {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }
}
