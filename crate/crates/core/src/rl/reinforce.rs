use std::fmt::Write as _;
use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::policy::GaussianPolicy;
use super::rollout::{rollout, Environment, Rollout, Shield};

/// `Σ γⁿ rₙ`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut acc = 0.0;
    let mut d = 1.0;
    for r in rewards {
        acc += d * r;
        d *= gamma;
    }
    acc
}

/// `(Σₙ ∇ ln π(aₙ|sₙ)) · R`.
pub fn score_times_return(score_sum: &[f64], ret: f64) -> Vec<f64> {
    score_sum.iter().map(|g| g * ret).collect()
}

/// The episode's policy-gradient estimate.
pub fn estimate_gradient(r: &Rollout) -> Vec<f64> {
    score_times_return(&r.score_sum, r.return_)
}

/// `w ← w + α_e · grad`.
pub fn sgd_update(w: &mut [f64], grad: &[f64], alpha_e: f64) {
    for (wi, gi) in w.iter_mut().zip(grad) {
        *wi += alpha_e * gi;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub episodes: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Subtract the running mean return before scaling the score. Off by
    /// default; the plain estimator is the one with the unbiasedness guarantee
    /// as stated.
    pub return_baseline: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { gamma: 0.99, episodes: 50, step_size: 1e-5, seed: 0, return_baseline: false }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::config("step_size must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub steps: usize,
    pub return_: f64,
    pub success: bool,
    pub violations: usize,
    pub visited: usize,
    pub min_phi: f64,
    pub cost_sum: f64,
    pub entered_safe_set: bool,
    pub violations_after_entry: usize,
    pub shield_activations: usize,
    pub aborted: bool,
}

impl EpisodeSummary {
    fn from_rollout(episode: usize, r: &Rollout) -> Self {
        Self {
            episode,
            steps: r.len(),
            return_: r.return_,
            success: r.succeeded,
            violations: r.violations(),
            visited: r.visited(),
            min_phi: r.min_phi(),
            cost_sum: r.cost_sum(),
            entered_safe_set: r.first_entry().is_some(),
            violations_after_entry: r.violations_after_entry(),
            shield_activations: r.steps.iter().filter(|s| s.shielded).count(),
            aborted: r.aborted,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeSummary>,
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str = "episode,steps,return,success,violations,min_phi,cost_sum";

    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        let mut line = String::new();
        for e in &self.episodes {
            line.clear();
            write!(
                line,
                "{},{},{},{},{},{},{}",
                e.episode,
                e.steps,
                e.return_,
                u8::from(e.success),
                e.violations,
                e.min_phi,
                e.cost_sum
            )
            .unwrap();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Unsafe visited states over all visited states.
    pub fn violation_fraction(&self) -> f64 {
        let visited: usize = self.episodes.iter().map(|e| e.visited).sum();
        if visited == 0 {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.violations).sum::<usize>() as f64 / visited as f64
    }

    pub fn violations_after_entry(&self) -> usize {
        self.episodes.iter().map(|e| e.violations_after_entry).sum()
    }
}

/// REINFORCE with an optional shield. Sampling uses a generator seeded from
/// `cfg.seed`; the policy is updated after every episode.
pub fn train(env: &Environment, policy: &mut GaussianPolicy, cfg: &TrainConfig, shield_parts: Option<&Shield>) -> Result<TrainingLog> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();
    let mut mean_return = 0.0;
    for episode in 0..cfg.episodes {
        let r = rollout(env, policy, cfg.gamma, shield_parts, &mut rng)?;
        let ret = if cfg.return_baseline {
            let centred = r.return_ - mean_return;
            mean_return += (r.return_ - mean_return) / (episode + 1) as f64;
            centred
        } else {
            r.return_
        };
        let grad = score_times_return(&r.score_sum, ret);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Simulation { t: episode as f64, message: "non-finite policy gradient".into() });
        }
        sgd_update(policy.params_mut(), &grad, cfg.step_size);
        log.episodes.push(EpisodeSummary::from_rollout(episode, &r));
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn return_examples() {
        assert_eq!(discounted_return(&[3.0, 5.0, 7.0], 0.0), 3.0);
        assert!((discounted_return(&[1.0, 1.0, 1.0], 0.5) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(score_times_return(&[1.0, -2.0], 0.0), vec![0.0, -0.0]);
        assert_eq!(score_times_return(&[1.0, -2.0], 3.0), vec![3.0, -6.0]);
    }

    #[test]
    fn sgd_examples() {
        let mut w = vec![1.0, 2.0];
        sgd_update(&mut w, &[0.0, 0.0], 0.1);
        assert_eq!(w, vec![1.0, 2.0]);
        sgd_update(&mut w, &[5.0, 5.0], 0.0);
        assert_eq!(w, vec![1.0, 2.0]);
        let (g1, g2) = ([0.5, -1.0], [2.0, 0.25]);
        let mut a = vec![0.0, 0.0];
        sgd_update(&mut a, &g1, 0.1);
        sgd_update(&mut a, &g2, 0.3);
        let summed: Vec<f64> = g1.iter().zip(&g2).map(|(x, y)| 0.1 * x + 0.3 * y).collect();
        let mut b = vec![0.0, 0.0];
        sgd_update(&mut b, &summed, 1.0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn gamma_must_be_below_one() {
        let cfg = TrainConfig { gamma: 1.0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
