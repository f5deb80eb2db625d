//! Closed-loop simulation of control-affine systems under zero-order hold.

mod controllers;
mod systems;

use std::fmt::Write as _;
use std::io;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::barrier::{ActionVec, BarrierFunction, InformationWindow, StateVec};
use crate::error::{Error, Result};

pub use controllers::{Controller, Decision, FilteredController, NominalController, XdotSource};
pub use systems::{
    bicycle2d, bicycle_ellipse_barrier, linear1d, sin_over, vehicle4d, vehicle_svd, BicycleParams, Linear1d,
    Linear1dParams, Vehicle4d, VehicleParams, VehicleTask,
};

pub type VectorField = Arc<dyn Fn(&StateVec) -> StateVec + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&StateVec) -> DMatrix<f64> + Send + Sync>;
/// A state-feedback law `u = k(x)`.
pub type Nominal = Arc<dyn Fn(&StateVec) -> ActionVec + Send + Sync>;

/// `ẋ = f(x) + g(x) u` with the true `f` and `g`. Controllers never receive one.
#[derive(Clone)]
pub struct AffineSystem {
    name: String,
    dim_state: usize,
    dim_action: usize,
    drift: VectorField,
    actuation: MatrixField,
    state_clip: Option<Vec<(f64, f64)>>,
}

impl std::fmt::Debug for AffineSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AffineSystem")
            .field("name", &self.name)
            .field("dim_state", &self.dim_state)
            .field("dim_action", &self.dim_action)
            .field("state_clip", &self.state_clip)
            .finish_non_exhaustive()
    }
}

impl AffineSystem {
    pub fn new<F, G>(name: impl Into<String>, dim_state: usize, dim_action: usize, drift: F, actuation: G) -> Self
    where
        F: Fn(&StateVec) -> StateVec + Send + Sync + 'static,
        G: Fn(&StateVec) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim_state,
            dim_action,
            drift: Arc::new(drift),
            actuation: Arc::new(actuation),
            state_clip: None,
        }
    }

    /// Saturates coordinate `i` to `bounds[i]` after every step. Use
    /// infinite bounds for unclipped coordinates.
    pub fn with_state_clip(mut self, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.len() != self.dim_state || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::config("state clip needs one ordered (low, high) pair per coordinate"));
        }
        self.state_clip = Some(bounds);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_state(&self) -> usize {
        self.dim_state
    }

    pub fn dim_action(&self) -> usize {
        self.dim_action
    }

    pub fn state_clip(&self) -> Option<&[(f64, f64)]> {
        self.state_clip.as_deref()
    }

    pub fn drift(&self, x: &StateVec) -> StateVec {
        (self.drift)(x)
    }

    pub fn actuation(&self, x: &StateVec) -> DMatrix<f64> {
        (self.actuation)(x)
    }

    /// `f(x) + g(x) u`.
    pub fn xdot(&self, x: &StateVec, u: &ActionVec) -> StateVec {
        self.drift(x) + self.actuation(x) * u
    }

    pub fn clip_state(&self, x: &mut StateVec) {
        if let Some(bounds) = &self.state_clip {
            for (v, &(lo, hi)) in x.iter_mut().zip(bounds) {
                *v = v.clamp(lo, hi);
            }
        }
    }

    fn check(&self, x: &StateVec, u: &ActionVec) -> Result<()> {
        if x.len() != self.dim_state || u.len() != self.dim_action {
            return Err(Error::config(format!(
                "system `{}` expects state/action dimensions {}/{}, got {}/{}",
                self.name,
                self.dim_state,
                self.dim_action,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    #[serde(default)]
    pub method: Method,
    pub horizon: f64,
}

impl IntegratorConfig {
    pub fn new(dt: f64, method: Method, horizon: f64) -> Result<Self> {
        let cfg = Self { dt, method, horizon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config(format!("integrator.dt must be > 0, got {}", self.dt)));
        }
        if !(self.horizon >= self.dt) || !self.horizon.is_finite() {
            return Err(Error::config(format!(
                "integrator.horizon ({}) must be at least dt ({})",
                self.horizon, self.dt
            )));
        }
        Ok(())
    }

    /// Number of integration steps covering the horizon.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }
}

/// Advances `x` by one period with `u` held constant, then applies the state clip.
pub fn step(sys: &AffineSystem, cfg: &IntegratorConfig, x: &StateVec, u: &ActionVec) -> Result<StateVec> {
    sys.check(x, u)?;
    let dt = cfg.dt;
    let mut next = match cfg.method {
        Method::Euler => x + sys.xdot(x, u) * dt,
        Method::Rk4 => {
            let k1 = sys.xdot(x, u);
            let k2 = sys.xdot(&(x + &k1 * (dt / 2.0)), u);
            let k3 = sys.xdot(&(x + &k2 * (dt / 2.0)), u);
            let k4 = sys.xdot(&(x + &k3 * dt), u);
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    sys.clip_state(&mut next);
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Simulation {
            t: f64::NAN,
            message: format!("non-finite state after step from x = {:?}, u = {:?}", x.as_slice(), u.as_slice()),
        });
    }
    Ok(next)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub x: StateVec,
    pub u: ActionVec,
    pub phi: f64,
    pub activated: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn min_phi(&self) -> f64 {
        self.samples.iter().map(|s| s.phi).fold(f64::INFINITY, f64::min)
    }

    /// Samples with `φ < 0`.
    pub fn violations(&self) -> usize {
        self.samples.iter().filter(|s| s.phi < 0.0).count()
    }

    /// Fraction of samples with `φ ≥ 0`.
    pub fn safety_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        1.0 - self.violations() as f64 / self.samples.len() as f64
    }

    /// Time of the first sample with `φ ≥ theta`.
    pub fn first_entry_time(&self, theta: f64) -> Option<f64> {
        self.samples.iter().find(|s| s.phi >= theta).map(|s| s.t)
    }

    pub fn activations(&self) -> usize {
        self.samples.iter().filter(|s| s.activated).count()
    }

    pub fn csv_header(dim_state: usize, dim_action: usize) -> String {
        let mut h = String::from("t");
        for i in 0..dim_state {
            write!(h, ",x{i}").unwrap();
        }
        for i in 0..dim_action {
            write!(h, ",u{i}").unwrap();
        }
        h.push_str(",phi,activated");
        h
    }

    /// Writes `t,x0..,u0..,phi,activated`. Floats use the shortest
    /// round-trip representation, so equal trajectories give equal bytes.
    pub fn write_csv<W: io::Write>(&self, mut w: W) -> io::Result<()> {
        let (d, p) = self.samples.first().map_or((0, 0), |s| (s.x.len(), s.u.len()));
        writeln!(w, "{}", Self::csv_header(d, p))?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            write!(line, "{}", s.t).unwrap();
            for v in s.x.iter().chain(s.u.iter()) {
                write!(line, ",{v}").unwrap();
            }
            write!(line, ",{},{}", s.phi, u8::from(s.activated)).unwrap();
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// Runs `controller` in closed loop from `x0` for the configured horizon.
///
/// At every sample the controller sees only the window `(x_n, x_{n−1}, u_{n−1}, dt)`,
/// with `x_{−1} = x_0` and `u_{−1}` supplied by [`Controller::init`]. The last
/// sample sits at the horizon; its action is recorded but never applied.
pub fn simulate(
    sys: &AffineSystem,
    cfg: &IntegratorConfig,
    barrier: &BarrierFunction,
    controller: &mut dyn Controller,
    x0: &StateVec,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n_steps = cfg.steps();
    let mut samples = Vec::with_capacity(n_steps + 1);
    let mut u_last = controller.init(x0)?;
    let mut x_prev = x0.clone();
    let mut x = x0.clone();
    for n in 0..=n_steps {
        let t = n as f64 * cfg.dt;
        let window = InformationWindow::new(x.clone(), x_prev, u_last, cfg.dt)?;
        let decision = controller.act(&window, t).map_err(|e| at_time(e, t))?;
        let phi = barrier.eval(&x)?;
        samples.push(Sample { t, x: x.clone(), u: decision.u.clone(), phi, activated: decision.activated });
        if n == n_steps {
            break;
        }
        let next = step(sys, cfg, &x, &decision.u).map_err(|e| fault_with_dump(e, t, &samples))?;
        x_prev = std::mem::replace(&mut x, next);
        u_last = decision.u;
    }
    Ok(Trajectory { samples })
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::Simulation { message, .. } => Error::Simulation { t, message },
        other => other,
    }
}

fn fault_with_dump(e: Error, t: f64, samples: &[Sample]) -> Error {
    match e {
        Error::Simulation { message, .. } => {
            let mut dump = String::new();
            let start = samples.len().saturating_sub(5);
            for s in &samples[start..] {
                write!(dump, "\n  t={} x={:?} u={:?} phi={}", s.t, s.x.as_slice(), s.u.as_slice(), s.phi).unwrap();
            }
            Error::Simulation { t, message: format!("{message}; last samples:{dump}") }
        }
        other => other,
    }
}
