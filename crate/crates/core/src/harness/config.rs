use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineKind, BaselineSettings};
use crate::dynamics::{BicycleParams, IntegratorConfig, Linear1dParams, Method, VehicleParams};
use crate::error::{Error, Result};
use crate::filter::FilterConfig;
use crate::rl::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[serde(rename = "invariance_1d")]
    Invariance1d,
    #[serde(rename = "recovery_1d")]
    Recovery1d,
    #[serde(rename = "baselines_1d")]
    Baselines1d,
    #[serde(rename = "train_4d")]
    Train4d,
    Unbiasedness,
    Adversarial,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Invariance1d => "invariance_1d",
            Self::Recovery1d => "recovery_1d",
            Self::Baselines1d => "baselines_1d",
            Self::Train4d => "train_4d",
            Self::Unbiasedness => "unbiasedness",
            Self::Adversarial => "adversarial",
        }
    }
}

/// Singular-value estimate and ratio bounds for a rank-one actuation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintySettings {
    pub lambda_hat: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Default for UncertaintySettings {
    fn default() -> Self {
        Self { lambda_hat: 1.0, lower: 0.2, upper: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BicycleSettings {
    pub params: BicycleParams,
    /// Semi-axes of the elliptical safe set in `(v, r)`.
    pub v_max: f64,
    pub r_max: f64,
}

impl Default for BicycleSettings {
    fn default() -> Self {
        Self { params: BicycleParams::default(), v_max: 2.0, r_max: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSettings {
    pub hidden: Vec<usize>,
    pub sigma: f64,
    pub ts: f64,
    pub max_steps: usize,
    /// Symmetric clamp on sampled actions; `None` disables it.
    pub action_clip: Option<f64>,
    pub u_init: f64,
    pub shielded: bool,
    /// Also train an unshielded learner from the same initial weights and seed.
    pub compare_unshielded: bool,
    pub save_checkpoints: bool,
    pub train: TrainConfig,
}

impl Default for RlSettings {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            sigma: 0.7,
            ts: 0.02,
            max_steps: 1000,
            action_clip: Some(100.0),
            u_init: 0.0,
            shielded: true,
            compare_unshielded: true,
            save_checkpoints: true,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnbiasednessSettings {
    pub n_samples: usize,
    pub temperature: f64,
    /// Row-major `[state][action]` logits.
    pub logits: Vec<f64>,
    pub z_threshold: f64,
    /// Replace the shield by the identity map.
    pub identity_shield: bool,
}

impl Default for UnbiasednessSettings {
    fn default() -> Self {
        Self { n_samples: 100_000, temperature: 1.0, logits: vec![0.3, -0.2, 0.5, 0.1], z_threshold: 4.0, identity_shield: false }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeSystem {
    #[default]
    Linear1d,
    Bicycle2d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdversarialSettings {
    pub system: ProbeSystem,
    /// Euler step used to show the state leaves the safe set.
    pub dt: f64,
    /// Half-width of the box the random action is drawn from.
    pub random_scale: f64,
    /// Gain of the greedy action `u₀ = k gᵀ∇φ`.
    pub greedy_gain: f64,
    /// Angle of the probed boundary point on the bicycle ellipse.
    pub boundary_angle: f64,
}

impl Default for AdversarialSettings {
    fn default() -> Self {
        Self { system: ProbeSystem::Linear1d, dt: 1e-3, random_scale: 10.0, greedy_gain: 1.0, boundary_angle: 0.7 }
    }
}

/// One experiment, as read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Not serialised, so a run's recorded config does not depend on where it was written.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    /// Initial state; scenario default when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub uncertainty: UncertaintySettings,
    #[serde(default)]
    pub linear1d: Linear1dParams,
    #[serde(default)]
    pub bicycle: BicycleSettings,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub baselines: Vec<BaselineKind>,
    #[serde(default)]
    pub baseline: BaselineSettings,
    #[serde(default)]
    pub rl: RlSettings,
    #[serde(default)]
    pub unbiasedness: UnbiasednessSettings,
    #[serde(default)]
    pub adversarial: AdversarialSettings,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides applied on top of a loaded config.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    pub episodes: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds must be non-empty"));
        }
        self.filter.validate()?;
        if let Some(i) = &self.integrator {
            i.validate()?;
        }
        self.rl.train.validate()?;
        match self.scenario {
            Scenario::Invariance1d | Scenario::Recovery1d | Scenario::Baselines1d => {
                if self.integrator.is_none() {
                    return Err(Error::config(format!("scenario {} needs an [integrator] section", self.scenario.name())));
                }
                self.check_x0(1)?;
                if self.scenario == Scenario::Baselines1d && self.baselines.is_empty() {
                    return Err(Error::config("baselines_1d needs a non-empty `baselines` list"));
                }
            }
            Scenario::Train4d => {
                self.check_x0(4)?;
                if self.rl.hidden.is_empty() || self.rl.hidden.contains(&0) {
                    return Err(Error::config("rl.hidden must list positive layer widths"));
                }
                if !(self.rl.sigma > 0.0) {
                    return Err(Error::config("rl.sigma must be > 0"));
                }
            }
            Scenario::Unbiasedness => {
                if self.unbiasedness.logits.len() != 4 {
                    return Err(Error::config("unbiasedness.logits needs 4 entries (2 states × 2 actions)"));
                }
                if !(self.unbiasedness.temperature > 0.0) || self.unbiasedness.n_samples < 2 {
                    return Err(Error::config("unbiasedness needs temperature > 0 and n_samples >= 2"));
                }
            }
            Scenario::Adversarial => {
                if !(self.adversarial.dt > 0.0) {
                    return Err(Error::config("adversarial.dt must be > 0"));
                }
            }
        }
        Ok(())
    }

    fn check_x0(&self, dim: usize) -> Result<()> {
        match &self.x0 {
            Some(x) if x.len() != dim => Err(Error::config(format!(
                "x0 has {} entries but scenario {} needs {dim}",
                x.len(),
                self.scenario.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seeds = vec![s];
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(dt) = o.dt {
            match (&mut self.integrator, self.scenario) {
                (_, Scenario::Train4d) => self.rl.ts = dt,
                (Some(i), _) => i.dt = dt,
                (None, _) => self.integrator = Some(IntegratorConfig { dt, method: Method::Rk4, horizon: dt }),
            }
        }
        if let Some(e) = o.episodes {
            self.rl.train.episodes = e;
        }
        self.validate()
    }

    pub fn integrator(&self) -> Result<IntegratorConfig> {
        self.integrator.ok_or_else(|| Error::config("missing [integrator] section"))
    }
}

/// A parsed config together with the exact text it came from.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let config = ExperimentConfig::from_toml(&text).map_err(|e| match e {
        Error::Parse(p) => Error::config(format!("{}: {p}", path.display())),
        Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(LoadedConfig { path: path.to_path_buf(), text, config })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "scenario = \"invariance_1d\"\n[integrator]\ndt = 2.5e-4\nhorizon = 0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![0]);
        assert_eq!(cfg.integrator.unwrap().method, Method::Rk4);
    }

    #[test]
    fn unknown_key_reports_its_line() {
        let err = ExperimentConfig::from_toml("scenario = \"adversarial\"\n\n[filter]\ntheta = 0.1\nbogus = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 5"), "{msg}");
    }

    #[test]
    fn overrides_replace_seeds_and_step() {
        let mut cfg = ExperimentConfig::from_toml(
            "scenario = \"recovery_1d\"\nseeds = [1, 2]\n[integrator]\ndt = 1e-3\nhorizon = 1.0\n",
        )
        .unwrap();
        cfg.apply(&Overrides { seed: Some(7), dt: Some(5e-4), ..Overrides::default() }).unwrap();
        assert_eq!(cfg.seeds, vec![7]);
        assert_eq!(cfg.integrator.unwrap().dt, 5e-4);
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        assert!(ExperimentConfig::from_toml("scenario = \"unbiasedness\"\nseeds = []\n").is_err());
    }
}
