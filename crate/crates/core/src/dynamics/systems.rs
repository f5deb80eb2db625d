//! Benchmark plants: a scalar unstable system, bicycle yaw dynamics and a
//! four-state vehicle turning task.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{BarrierFunction, StateVec};
use crate::error::{Error, Result};
use crate::uncertainty::{bicycle_svd, StiffnessGuess, SvdUncertaintyModel, TrueActuation};

use super::{AffineSystem, Nominal};

/// `ẋ = a x + b u`, `u_nom = −k x`, `φ = 1 − c x²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Linear1dParams {
    pub drift_gain: f64,
    pub input_gain: f64,
    pub nominal_gain: f64,
    pub barrier_curvature: f64,
}

impl Default for Linear1dParams {
    fn default() -> Self {
        Self { drift_gain: 1.5, input_gain: 1.0, nominal_gain: 1.0, barrier_curvature: 25.0 }
    }
}

#[derive(Clone)]
pub struct Linear1d {
    pub params: Linear1dParams,
    pub system: AffineSystem,
    pub nominal: Nominal,
    pub barrier: BarrierFunction,
}

impl Linear1d {
    /// Scalar uncertainty model around the true input gain.
    pub fn svd(&self, lambda_hat: f64, lower: f64, upper: f64) -> Result<(SvdUncertaintyModel, TrueActuation)> {
        if !(self.params.input_gain > 0.0) {
            return Err(Error::config("the scalar benchmark needs a positive input gain"));
        }
        let model = SvdUncertaintyModel::scalar(lambda_hat, lower, upper)?;
        let truth = TrueActuation::new(&model, vec![self.params.input_gain])?;
        Ok((model, truth))
    }
}

pub fn linear1d(params: Linear1dParams) -> Linear1d {
    let Linear1dParams { drift_gain, input_gain, nominal_gain, barrier_curvature: c } = params;
    let system = AffineSystem::new(
        "linear1d",
        1,
        1,
        move |x: &StateVec| x * drift_gain,
        move |_: &StateVec| DMatrix::from_element(1, 1, input_gain),
    );
    let nominal: Nominal = Arc::new(move |x: &StateVec| x * -nominal_gain);
    let barrier = BarrierFunction::new(
        "interval",
        1,
        move |x: &StateVec| 1.0 - c * x[0] * x[0],
        move |x: &StateVec| DVector::from_element(1, -2.0 * c * x[0]),
    );
    Linear1d { params, system, nominal, barrier }
}

/// Single-track lateral model with state `[v, r]` and steering input.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BicycleParams {
    pub mass: f64,
    pub a1: f64,
    pub a2: f64,
    pub iz: f64,
    pub speed: f64,
    pub cf: f64,
    pub cr: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self { mass: 1500.0, a1: 1.2, a2: 1.4, iz: 2500.0, speed: 20.0, cf: 60_000.0, cr: 60_000.0 }
    }
}

impl BicycleParams {
    pub fn svd(&self, guess: StiffnessGuess) -> Result<(SvdUncertaintyModel, TrueActuation)> {
        bicycle_svd(self.mass, self.a1, self.iz, self.cf, guess)
    }
}

pub fn bicycle2d(p: BicycleParams) -> Result<AffineSystem> {
    for (name, v) in [
        ("mass", p.mass),
        ("a1", p.a1),
        ("a2", p.a2),
        ("iz", p.iz),
        ("speed", p.speed),
        ("cf", p.cf),
        ("cr", p.cr),
    ] {
        if !(v > 0.0) {
            return Err(Error::config(format!("bicycle parameter {name} must be > 0, got {v}")));
        }
    }
    let BicycleParams { mass: m, a1, a2, iz, speed: u, cf, cr } = p;
    let a = DMatrix::from_row_slice(
        2,
        2,
        &[
            -(cr + cf) / (m * u),
            (cr * a2 - cf * a1) / (m * u) - u,
            (cr * a2 - cf * a1) / (u * iz),
            -(cf * a1 * a1 + cr * a2 * a2) / (u * iz),
        ],
    );
    let g = DMatrix::from_column_slice(2, 1, &[cf / m, cf * a1 / iz]);
    Ok(AffineSystem::new("bicycle2d", 2, 1, move |x: &StateVec| &a * x, move |_: &StateVec| g.clone()))
}

/// `φ = 1 − (v/v_max)² − (r/r_max)²`.
pub fn bicycle_ellipse_barrier(v_max: f64, r_max: f64) -> BarrierFunction {
    let (cv, cr) = (1.0 / (v_max * v_max), 1.0 / (r_max * r_max));
    BarrierFunction::new(
        "bicycle_ellipse",
        2,
        move |x: &StateVec| 1.0 - cv * x[0] * x[0] - cr * x[1] * x[1],
        move |x: &StateVec| DVector::from_row_slice(&[-2.0 * cv * x[0], -2.0 * cr * x[1]]),
    )
}

/// `sin(ψ)/ψ`, continuous through zero.
pub fn sin_over(psi: f64) -> f64 {
    if psi.abs() < 1e-4 {
        let p2 = psi * psi;
        1.0 - p2 / 6.0 + p2 * p2 / 120.0
    } else {
        psi.sin() / psi
    }
}

/// Vehicle turning task with state `[V_y, r, ψ, y]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    pub iz: f64,
    pub a: f64,
    pub c_alpha: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub speed: f64,
    pub vy_clip: f64,
    pub r_clip: f64,
    pub barrier_level: f64,
    pub barrier_r_weight: f64,
    pub barrier_r_center: f64,
    pub barrier_vy_weight: f64,
    pub barrier_vy_center: f64,
    pub goal_heading: f64,
    pub goal_tolerance: f64,
    pub success_reward: f64,
    pub step_penalty: f64,
    pub shaping_gain: f64,
    pub shaping_eps: f64,
    pub cost_r_weight: f64,
    pub cost_vy_weight: f64,
    pub cost_cap: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 100.0,
            iz: 20.0,
            a: 1.0,
            c_alpha: 10.0,
            c0: 70.0,
            c1: 40.0,
            c2: 180.0,
            speed: 5.0,
            vy_clip: 7.0,
            r_clip: 350.0,
            barrier_level: 200.0,
            barrier_r_weight: 4.0,
            barrier_r_center: 50.0 * PI,
            barrier_vy_weight: 0.001,
            barrier_vy_center: 2.5,
            goal_heading: PI / 2.0,
            goal_tolerance: PI / 36.0,
            success_reward: 7000.0,
            step_penalty: 4.0,
            shaping_gain: 0.25,
            shaping_eps: 1e-4,
            cost_r_weight: 0.004,
            cost_vy_weight: 1e-6,
            cost_cap: 0.1,
        }
    }
}

/// Reward and cost of the turning task.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleTask {
    pub params: VehicleParams,
}

impl VehicleTask {
    pub fn reached_goal(&self, s: &StateVec) -> bool {
        (s[2] - self.params.goal_heading).abs() < self.params.goal_tolerance
    }

    /// Reward for moving from `s` to `s_next`, and whether the episode ends.
    pub fn reward(&self, s: &StateVec, s_next: &StateVec) -> (f64, bool) {
        let p = &self.params;
        if self.reached_goal(s_next) {
            (p.success_reward, true)
        } else {
            let e = s[2] - p.goal_heading;
            (-p.step_penalty + p.shaping_gain / (e * e + p.shaping_eps), false)
        }
    }

    pub fn cost(&self, s_next: &StateVec) -> f64 {
        let p = &self.params;
        let dr = s_next[1] - p.barrier_r_center;
        let dv = s_next[0] - p.barrier_vy_center;
        (p.cost_r_weight * dr * dr + p.cost_vy_weight * dv * dv).min(p.cost_cap)
    }
}

#[derive(Clone)]
pub struct Vehicle4d {
    pub system: AffineSystem,
    pub barrier: BarrierFunction,
    pub task: VehicleTask,
}

pub fn vehicle4d(p: VehicleParams) -> Result<Vehicle4d> {
    for (name, v) in [("mass", p.mass), ("iz", p.iz), ("a", p.a), ("c_alpha", p.c_alpha), ("speed", p.speed)] {
        if !(v > 0.0) {
            return Err(Error::config(format!("vehicle parameter {name} must be > 0, got {v}")));
        }
    }
    let (m, iz, v) = (p.mass, p.iz, p.speed);
    let (c0, c1, c2) = (p.c0, p.c1, p.c2);
    let drift = move |x: &StateVec| {
        let (vy, r, psi) = (x[0], x[1], x[2]);
        DVector::from_row_slice(&[
            -c0 / (m * v) * vy + (-c1 / (m * v) - v) * r,
            -c1 / (iz * v) * vy - c2 / (iz * v) * r,
            r,
            psi.cos() * vy + v * sin_over(psi) * psi,
        ])
    };
    let g = DMatrix::from_column_slice(4, 1, &[p.c_alpha / m, p.a * p.c_alpha / iz, 0.0, 0.0]);
    let inf = f64::INFINITY;
    let system = AffineSystem::new("vehicle4d", 4, 1, drift, move |_: &StateVec| g.clone()).with_state_clip(vec![
        (-p.vy_clip, p.vy_clip),
        (-p.r_clip, p.r_clip),
        (-inf, inf),
        (-inf, inf),
    ])?;

    let (lvl, wr, rc, wv, vc) = (p.barrier_level, p.barrier_r_weight, p.barrier_r_center, p.barrier_vy_weight, p.barrier_vy_center);
    let barrier = BarrierFunction::new(
        "yaw_rate_band",
        4,
        move |x: &StateVec| lvl - wr * (x[1] - rc).powi(2) - wv * (x[0] - vc).powi(2),
        move |x: &StateVec| DVector::from_row_slice(&[-2.0 * wv * (x[0] - vc), -2.0 * wr * (x[1] - rc), 0.0, 0.0]),
    );
    Ok(Vehicle4d { system, barrier, task: VehicleTask { params: p } })
}

/// Singular vectors of the vehicle's steering column plus a user estimate of
/// its singular value. The true singular value is `C·‖(1/m, a/I_z)‖`.
pub fn vehicle_svd(p: &VehicleParams, lambda_hat: f64, lower: f64, upper: f64) -> Result<(SvdUncertaintyModel, TrueActuation)> {
    let n = (1.0 / p.mass).hypot(p.a / p.iz);
    let (c1, c2) = ((1.0 / p.mass) / n, (p.a / p.iz) / n);
    let mut u = DMatrix::identity(4, 4);
    u[(0, 0)] = c1;
    u[(0, 1)] = -c2;
    u[(1, 0)] = c2;
    u[(1, 1)] = c1;
    let model = SvdUncertaintyModel::new(u, DMatrix::identity(1, 1), vec![lambda_hat], vec![lower], vec![upper])?;
    let truth = TrueActuation::new(&model, vec![p.c_alpha * n])?;
    Ok((model, truth))
}
