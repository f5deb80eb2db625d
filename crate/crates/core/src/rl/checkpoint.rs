//! Plain-text policy checkpoints.
//!
//! ```text
//! fewshot-policy 1
//! sizes 4 100 100 1
//! sigma 0.7
//! <one parameter per line>
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::policy::GaussianPolicy;

pub const CHECKPOINT_MAGIC: &str = "fewshot-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_string(policy: &GaussianPolicy) -> String {
    let mut s = String::with_capacity(policy.num_params() * 24 + 64);
    writeln!(s, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
    let sizes: Vec<String> = policy.sizes().iter().map(|n| n.to_string()).collect();
    writeln!(s, "sizes {}", sizes.join(" ")).unwrap();
    writeln!(s, "sigma {}", policy.sigma()).unwrap();
    for p in policy.params() {
        writeln!(s, "{p}").unwrap();
    }
    s
}

pub fn from_str(text: &str) -> Result<GaussianPolicy> {
    let bad = |msg: &str| Error::config(format!("checkpoint: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    let mut parts = header.split_whitespace();
    if parts.next() != Some(CHECKPOINT_MAGIC) {
        return Err(bad("missing header"));
    }
    let version: u32 = parts.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing version"))?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let sizes_line = lines.next().and_then(|l| l.strip_prefix("sizes ")).ok_or_else(|| bad("missing sizes"))?;
    let sizes = sizes_line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad("bad sizes"))?;
    let sigma: f64 = lines
        .next()
        .and_then(|l| l.strip_prefix("sigma "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad("missing sigma"))?;
    let params = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad("bad parameter value"))?;
    GaussianPolicy::from_params(&sizes, sigma, params)
}

pub fn save(policy: &GaussianPolicy, path: &Path) -> Result<()> {
    std::fs::write(path, to_string(policy))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<GaussianPolicy> {
    from_str(&std::fs::read_to_string(path)?)
}
