//! Adaptive CBF controllers with a scalar parameter estimate.
//!
//! The controllers model the plant as `ẋ = f₀x + θ F x + g u` with `θ` unknown
//! and enforce `φ_a' (x)·ẋ ≥ rhs` for `φ_a = 1 − c x²`. With a single input the
//! QP `min |u − u_nom|` is a projection onto a half-line.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::barrier::{ActionVec, InformationWindow, StateVec};
use crate::dynamics::{Controller, Decision, Nominal};
use crate::error::{Error, Result};

use super::BaselineSettings;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarCbfModel {
    /// `f₀` in the known part of the drift `f₀ x`.
    pub known_drift: f64,
    /// `F` in the regressor `F x`.
    pub regressor: f64,
    pub input_gain: f64,
    pub barrier_curvature: f64,
}

impl Default for ScalarCbfModel {
    fn default() -> Self {
        Self { known_drift: 1.0, regressor: 1.0, input_gain: 1.0, barrier_curvature: 25.0 }
    }
}

impl ScalarCbfModel {
    pub fn phi(&self, x: f64) -> f64 {
        1.0 - self.barrier_curvature * x * x
    }

    pub fn dphi(&self, x: f64) -> f64 {
        -2.0 * self.barrier_curvature * x
    }

    /// Adaptation direction `−F(x) ∂φ_a/∂x`.
    pub fn tau(&self, x: f64) -> f64 {
        -self.regressor * x * self.dphi(x)
    }

    /// Closed-form `argmin |u − u_nom|` subject to `φ_a'(x)(f₀x + θ̂Fx + gu) ≥ rhs`.
    /// The flag is false when no `u` satisfies the constraint.
    pub fn project(&self, x: f64, theta_hat: f64, u_nom: f64, rhs: f64) -> (f64, bool) {
        let dphi = self.dphi(x);
        let a = dphi * self.input_gain;
        let b = rhs - dphi * (self.known_drift + theta_hat * self.regressor) * x;
        if a * u_nom >= b {
            (u_nom, true)
        } else if a != 0.0 {
            (b / a, true)
        } else {
            (u_nom, false)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcbfState {
    pub theta_hat: f64,
    pub gamma_rate: f64,
    pub dt: f64,
}

/// aCBF step: project `u_nom`, then integrate `θ̂̇ = Γ τ(x)` over one period.
pub fn acbf_control(s: &mut AcbfState, model: &ScalarCbfModel, x: f64, u_nom: f64) -> f64 {
    let (u, _) = model.project(x, s.theta_hat, u_nom, 0.0);
    s.theta_hat += s.dt * s.gamma_rate * model.tau(x);
    u
}

#[derive(Clone, Debug, PartialEq)]
pub struct RacbfState {
    pub theta_hat: f64,
    pub gamma_rate: f64,
    pub nu_tilde: f64,
    pub d_bound: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub dt: f64,
    /// Set-membership updates whose data contradicted the current interval.
    pub warnings: usize,
    pub infeasible: usize,
}

/// RaCBF step: the constraint right side is tightened to `−φ_a + ν̃²/(2Γ)`.
pub fn racbf_control(s: &mut RacbfState, model: &ScalarCbfModel, x: f64, u_nom: f64, phi_a: f64) -> f64 {
    let rhs = -phi_a + s.nu_tilde * s.nu_tilde / (2.0 * s.gamma_rate);
    let (u, feasible) = model.project(x, s.theta_hat, u_nom, rhs);
    if !feasible {
        s.infeasible += 1;
    }
    s.theta_hat += s.dt * s.gamma_rate * model.tau(x);
    u
}

/// One observed transition: state, held input and measured derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmidSample {
    pub x: f64,
    pub u: f64,
    pub xdot: f64,
}

/// Intersects `[r_min, r_max]` with every parameter interval consistent with
/// `|ẋ − f₀x − gu − θFx| ≤ D`, then sets `ν̃ = max(|r_min − θ̂|, |r_max − θ̂|)`.
///
/// Contradictory data leave the interval untouched and bump `warnings`.
pub fn smid_update(s: &mut RacbfState, model: &ScalarCbfModel, history: &[SmidSample]) {
    let (mut lo, mut hi) = (s.r_min, s.r_max);
    for smp in history {
        let fx = model.regressor * smp.x;
        if fx == 0.0 {
            continue;
        }
        let base = smp.xdot - model.known_drift * smp.x - model.input_gain * smp.u;
        let (a, b) = ((base - s.d_bound) / fx, (base + s.d_bound) / fx);
        lo = lo.max(a.min(b));
        hi = hi.min(a.max(b));
    }
    if lo > hi {
        s.warnings += 1;
    } else {
        s.r_min = lo;
        s.r_max = hi;
    }
    s.nu_tilde = (s.r_min - s.theta_hat).abs().max((s.r_max - s.theta_hat).abs());
}

fn scalar(v: f64) -> ActionVec {
    DVector::from_element(1, v)
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::config("baseline controllers need dt > 0"));
    }
    Ok(())
}

pub struct AcbfController {
    pub state: AcbfState,
    model: ScalarCbfModel,
    nominal: Nominal,
}

impl AcbfController {
    pub fn new(settings: &BaselineSettings, dt: f64, nominal: Nominal) -> Result<Self> {
        check_dt(dt)?;
        Ok(Self {
            state: AcbfState { theta_hat: settings.theta_hat0, gamma_rate: settings.adaptation_gain, dt },
            model: settings.model,
            nominal,
        })
    }
}

impl Controller for AcbfController {
    fn init(&mut self, x0: &StateVec) -> Result<ActionVec> {
        Ok((self.nominal)(x0))
    }

    fn act(&mut self, w: &InformationWindow, _t: f64) -> Result<Decision> {
        let x = w.x_now[0];
        let u_nom = (self.nominal)(&w.x_now)[0];
        let u = acbf_control(&mut self.state, &self.model, x, u_nom);
        Ok(Decision { u: scalar(u), activated: u != u_nom })
    }
}

pub struct RacbfController {
    pub state: RacbfState,
    model: ScalarCbfModel,
    nominal: Nominal,
    smid_every: Option<usize>,
    pending: Vec<SmidSample>,
    step: usize,
}

impl RacbfController {
    pub fn new(settings: &BaselineSettings, dt: f64, nominal: Nominal, with_smid: bool) -> Result<Self> {
        check_dt(dt)?;
        if !(settings.nu_tilde0 >= 0.0) || !(settings.smid_residual_bound >= 0.0) {
            return Err(Error::config("nu_tilde0 and smid_residual_bound must be >= 0"));
        }
        let smid_every = if with_smid {
            if !(settings.smid_period > 0.0) {
                return Err(Error::config("smid_period must be > 0"));
            }
            Some(((settings.smid_period / dt).round() as usize).max(1))
        } else {
            None
        };
        Ok(Self {
            state: RacbfState {
                theta_hat: settings.theta_hat0,
                gamma_rate: settings.adaptation_gain,
                nu_tilde: settings.nu_tilde0,
                d_bound: settings.smid_residual_bound,
                r_min: settings.theta_hat0 - settings.nu_tilde0,
                r_max: settings.theta_hat0 + settings.nu_tilde0,
                dt,
                warnings: 0,
                infeasible: 0,
            },
            model: settings.model,
            nominal,
            smid_every,
            pending: Vec::new(),
            step: 0,
        })
    }
}

impl Controller for RacbfController {
    fn init(&mut self, x0: &StateVec) -> Result<ActionVec> {
        Ok((self.nominal)(x0))
    }

    fn act(&mut self, w: &InformationWindow, _t: f64) -> Result<Decision> {
        if let Some(every) = self.smid_every {
            if self.step > 0 {
                self.pending.push(SmidSample { x: w.x_prev[0], u: w.u_last[0], xdot: w.xdot_minus()[0] });
                if self.step.is_multiple_of(every) {
                    smid_update(&mut self.state, &self.model, &self.pending);
                    self.pending.clear();
                }
            }
        }
        self.step += 1;
        let x = w.x_now[0];
        let u_nom = (self.nominal)(&w.x_now)[0];
        let u = racbf_control(&mut self.state, &self.model, x, u_nom, self.model.phi(x));
        Ok(Decision { u: scalar(u), activated: u != u_nom })
    }
}
