use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;

use crate::barrier::{ActionVec, BarrierFunction, StateVec};
use crate::dynamics::{AffineSystem, VehicleTask};
use crate::error::{Error, Result};
use crate::filter::{filter_step, FilterConfig, FilterState};
use crate::uncertainty::ActuationKnowledge;

use super::policy::GaussianPolicy;

/// Episode reward structure.
pub trait EpisodeTask: Send + Sync {
    /// Reward for the transition `s → s_next` and whether the episode ends.
    fn reward(&self, s: &StateVec, s_next: &StateVec) -> (f64, bool);
    /// Logged safety cost; never optimised.
    fn cost(&self, _s_next: &StateVec) -> f64 {
        0.0
    }
}

impl EpisodeTask for VehicleTask {
    fn reward(&self, s: &StateVec, s_next: &StateVec) -> (f64, bool) {
        VehicleTask::reward(self, s, s_next)
    }

    fn cost(&self, s_next: &StateVec) -> f64 {
        VehicleTask::cost(self, s_next)
    }
}

/// The correction controller used as a deterministic action overwrite.
#[derive(Clone)]
pub struct Shield {
    pub cfg: FilterConfig,
    pub barrier: BarrierFunction,
    pub knowledge: Arc<dyn ActuationKnowledge>,
}

/// `C(s, ṡ⁻, a, u_last)`: `a` when `φ(s)` is above the trigger, otherwise the
/// correction computed from `u_last`. Returns the action and whether it was overwritten.
pub fn shield(s: &StateVec, sdot_minus: &DVector<f64>, a: &ActionVec, u_last: &ActionVec, parts: &Shield) -> Result<(ActionVec, bool)> {
    let model = parts.knowledge.model_at(s)?;
    let mut fs = FilterState::initialize(s.clone(), u_last.clone(), 0.0);
    let (u, diag) = filter_step(&parts.cfg, &mut fs, &model, &parts.barrier, s, sdot_minus, a)?;
    Ok((u, diag.activated))
}

/// Episode environment: Euler transitions `s⁺ = s + T_s (f(s) + g(s) u)`.
#[derive(Clone)]
pub struct Environment {
    pub system: AffineSystem,
    pub barrier: BarrierFunction,
    pub task: Arc<dyn EpisodeTask>,
    pub x0: StateVec,
    pub ts: f64,
    pub max_steps: usize,
    /// Symmetric clamp on sampled actions, applied before the shield.
    pub action_clip: Option<f64>,
    /// `u_{−1}`, the action treated as held before the first step.
    pub u_init: ActionVec,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts > 0.0) {
            return Err(Error::config("environment ts must be > 0"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be >= 1"));
        }
        if self.x0.len() != self.system.dim_state() || self.u_init.len() != self.system.dim_action() {
            return Err(Error::config("x0 / u_init dimensions do not match the system"));
        }
        Ok(())
    }

    fn transition(&self, s: &StateVec, u: &ActionVec) -> StateVec {
        let mut next = s + self.system.xdot(s, u) * self.ts;
        self.system.clip_state(&mut next);
        next
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub s: StateVec,
    /// The sampled action before clipping; the score is taken at this value.
    pub a: ActionVec,
    /// The action actually played.
    pub u: ActionVec,
    pub r: f64,
    pub logp: f64,
    pub phi: f64,
    pub cost: f64,
    pub shielded: bool,
}

/// One episode. Per-step score vectors are summed at sampling time into
/// `score_sum`; keeping them all would cost `steps × num_params` floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub steps: Vec<StepRecord>,
    pub final_state: StateVec,
    pub final_phi: f64,
    pub score_sum: Vec<f64>,
    pub return_: f64,
    pub succeeded: bool,
    /// Ended early on a non-finite state.
    pub aborted: bool,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn phis(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.phi).chain(std::iter::once(self.final_phi))
    }

    /// Visited states (including the last) with `φ < 0`.
    pub fn violations(&self) -> usize {
        self.phis().filter(|p| *p < 0.0).count()
    }

    pub fn visited(&self) -> usize {
        self.steps.len() + 1
    }

    pub fn min_phi(&self) -> f64 {
        self.phis().fold(f64::INFINITY, f64::min)
    }

    pub fn cost_sum(&self) -> f64 {
        self.steps.iter().map(|s| s.cost).sum()
    }

    /// Index of the first visited state with `φ ≥ 0`.
    pub fn first_entry(&self) -> Option<usize> {
        self.phis().position(|p| p >= 0.0)
    }

    /// Visited states with `φ < 0` after the first one with `φ ≥ 0`.
    pub fn violations_after_entry(&self) -> usize {
        match self.first_entry() {
            Some(k) => self.phis().skip(k).filter(|p| *p < 0.0).count(),
            None => 0,
        }
    }
}

/// Plays one episode of `policy` in `env`, optionally through `shield`.
pub fn rollout<R: Rng + ?Sized>(
    env: &Environment,
    policy: &GaussianPolicy,
    gamma: f64,
    shield_parts: Option<&Shield>,
    rng: &mut R,
) -> Result<Rollout> {
    env.validate()?;
    let mut score_sum = vec![0.0; policy.num_params()];
    let mut steps = Vec::new();
    let mut s = env.x0.clone();
    let mut s_prev = env.x0.clone();
    let mut u_last = env.u_init.clone();
    let mut return_ = 0.0;
    let mut discount = 1.0;
    let mut succeeded = false;
    let mut aborted = false;
    for _ in 0..env.max_steps {
        let sdot_minus = (&s - &s_prev) / env.ts;
        let (a, logp) = policy.sample_into(&s, rng, &mut score_sum);
        let mut a_play = a.clone();
        if let Some(c) = env.action_clip {
            a_play.apply(|v| *v = v.clamp(-c, c));
        }
        let (u, shielded) = match shield_parts {
            Some(parts) => shield(&s, &sdot_minus, &a_play, &u_last, parts)?,
            None => (a_play, false),
        };
        let next = env.transition(&s, &u);
        let phi = env.barrier.eval(&s)?;
        if next.iter().any(|v| !v.is_finite()) {
            steps.push(StepRecord { s: s.clone(), a, u, r: 0.0, logp, phi, cost: 0.0, shielded });
            aborted = true;
            break;
        }
        let (r, done) = env.task.reward(&s, &next);
        let cost = env.task.cost(&next);
        return_ += discount * r;
        discount *= gamma;
        steps.push(StepRecord { s: s.clone(), a, u: u.clone(), r, logp, phi, cost, shielded });
        s_prev = std::mem::replace(&mut s, next);
        u_last = u;
        if done {
            succeeded = true;
            break;
        }
    }
    let final_phi = if aborted { f64::NAN } else { env.barrier.eval(&s)? };
    Ok(Rollout { steps, final_state: s, final_phi, score_sum, return_, succeeded, aborted })
}
