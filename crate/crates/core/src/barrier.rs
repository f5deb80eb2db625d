//! Barrier functions, their super-level sets and the two-sample information window.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};

pub type StateVec = DVector<f64>;
pub type ActionVec = DVector<f64>;

type ScalarFn = Arc<dyn Fn(&StateVec) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&StateVec) -> StateVec + Send + Sync>;

/// A continuously differentiable `φ: R^d → R`. The safe set is `{x : φ(x) ≥ 0}`.
///
/// Cloning is cheap: the closures are reference counted.
#[derive(Clone)]
pub struct BarrierFunction {
    name: String,
    dim: usize,
    eval: ScalarFn,
    grad: GradientFn,
}

impl fmt::Debug for BarrierFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BarrierFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl BarrierFunction {
    pub fn new<E, G>(name: impl Into<String>, dim: usize, eval: E, grad: G) -> Self
    where
        E: Fn(&StateVec) -> f64 + Send + Sync + 'static,
        G: Fn(&StateVec) -> StateVec + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
        }
    }

    /// Builds a barrier whose gradient is a central finite difference with step `h`.
    ///
    /// Every barrier shipped with the crate has an analytic gradient; this is
    /// for quick experiments only.
    pub fn with_finite_difference_gradient<E>(
        name: impl Into<String>,
        dim: usize,
        eval: E,
        h: f64,
    ) -> Self
    where
        E: Fn(&StateVec) -> f64 + Send + Sync + 'static,
    {
        let eval: ScalarFn = Arc::new(eval);
        let inner = Arc::clone(&eval);
        Self {
            name: name.into(),
            dim,
            eval,
            grad: Arc::new(move |x: &StateVec| central_difference_of(&*inner, x, h)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &StateVec) -> Result<f64> {
        self.check_dim(x)?;
        Ok((self.eval)(x))
    }

    pub fn grad(&self, x: &StateVec) -> Result<StateVec> {
        self.check_dim(x)?;
        Ok((self.grad)(x))
    }

    fn check_dim(&self, x: &StateVec) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::config(format!(
                "barrier `{}` expects a state of dimension {}, got {}",
                self.name,
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }
}

/// `φ(x)`, with a dimension check.
pub fn phi_eval(b: &BarrierFunction, x: &StateVec) -> Result<f64> {
    b.eval(x)
}

fn central_difference_of(eval: &(dyn Fn(&StateVec) -> f64 + Send + Sync), x: &StateVec, h: f64) -> StateVec {
    let mut probe = x.clone();
    DVector::from_fn(x.len(), |i, _| {
        let xi = x[i];
        probe[i] = xi + h;
        let up = eval(&probe);
        probe[i] = xi - h;
        let down = eval(&probe);
        probe[i] = xi;
        (up - down) / (2.0 * h)
    })
}

/// Central finite-difference gradient of `b` at `x` with step `h`.
pub fn central_difference(b: &BarrierFunction, x: &StateVec, h: f64) -> Result<StateVec> {
    b.check_dim(x)?;
    Ok(central_difference_of(&*b.eval, x, h))
}

/// Largest deviation between the analytic gradient and a central difference
/// with step `h`, relative to `max(‖∇φ‖∞, ‖∇_h φ‖∞, 1)`.
///
/// The unit floor keeps the measure meaningful where the gradient vanishes.
pub fn grad_check(b: &BarrierFunction, x: &StateVec, h: f64) -> f64 {
    assert!(h > 0.0, "finite-difference step must be positive");
    let analytic = (b.grad)(x);
    let numeric = central_difference_of(&*b.eval, x, h);
    let scale = analytic.amax().max(numeric.amax()).max(1.0);
    (analytic - numeric).amax() / scale
}

/// The θ-super-level set `S_θ = {x : φ(x) ≥ θ}`.
#[derive(Clone, Debug)]
pub struct SafeSubset {
    barrier: BarrierFunction,
    theta: f64,
}

impl SafeSubset {
    pub fn new(barrier: BarrierFunction, theta: f64) -> Result<Self> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::config(format!("subset threshold must be finite and >= 0, got {theta}")));
        }
        Ok(Self { barrier, theta })
    }

    pub fn barrier(&self) -> &BarrierFunction {
        &self.barrier
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn contains(&self, x: &StateVec) -> Result<bool> {
        Ok(self.barrier.eval(x)? >= self.theta)
    }

    /// `θ − φ(x)` outside the subset, `0` on or inside it.
    pub fn distance(&self, x: &StateVec) -> Result<f64> {
        Ok(distance_from_value(self.theta, self.barrier.eval(x)?))
    }
}

/// `max(θ − φ, 0)`.
pub fn distance_from_value(theta: f64, phi: f64) -> f64 {
    (theta - phi).max(0.0)
}

pub fn distance_to_subset(s: &SafeSubset, x: &StateVec) -> Result<f64> {
    s.distance(x)
}

/// The state/action history a correction controller is allowed to see: the
/// current state, the state `delta` seconds earlier and the action held since then.
#[derive(Clone, Debug, PartialEq)]
pub struct InformationWindow {
    pub x_now: StateVec,
    pub x_prev: StateVec,
    pub u_last: ActionVec,
    pub delta: f64,
}

impl InformationWindow {
    pub fn new(x_now: StateVec, x_prev: StateVec, u_last: ActionVec, delta: f64) -> Result<Self> {
        // a zero-length window carries a single sample, from which no
        // controller can guarantee invariance
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::config(format!("information window length must be > 0, got {delta}")));
        }
        if x_now.len() != x_prev.len() {
            return Err(Error::config("window states have different dimensions"));
        }
        Ok(Self { x_now, x_prev, u_last, delta })
    }

    /// Backward difference `(x_now − x_prev) / δ`.
    pub fn xdot_minus(&self) -> StateVec {
        (&self.x_now - &self.x_prev) / self.delta
    }
}
