//! The two-sample correction controller.
//!
//! While `φ(x) > θ` the nominal action passes through untouched. Otherwise the
//! action is overwritten with
//!
//! ```text
//! u = u_last − ĝ⁺(x) y,        y = Γ ẋ⁻
//! ```
//!
//! where the coordinates `z_i = ⟨U_i, y⟩` are chosen so that every term of
//! `Σ β_i ε_i` is non-negative for all singular values admitted by the ratio
//! bounds. That makes the right derivative of `φ` at least `η`.
//!
//! `Γ` only ever appears multiplied by `ẋ⁻`, so the solver works with `y`
//! directly and reconstructs a rank-one `Γ` for diagnostics when `ẋ⁻ ≠ 0`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::barrier::{ActionVec, BarrierFunction, InformationWindow, StateVec};
use crate::error::{Error, Result};
use crate::uncertainty::{ActuationKnowledge, SvdUncertaintyModel};

/// Denominator used for the recovery coefficient `α`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaNormalization {
    /// `Σ_{i ≤ k} β_i²`, the squared norm of the gradient's component in the
    /// actuated subspace. Identical to `Full` when `g` has full row rank.
    #[default]
    Range,
    /// `‖∇φ‖²`. Loses the rate guarantee when `rank(g) < d` and the gradient
    /// has a component outside the actuated subspace.
    Full,
}

/// How `Γ ẋ⁻` is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Solve the strict inequalities every step.
    #[default]
    Solve,
    /// A fixed scalar `Γ = γ I`. No guarantee; kept for replicating fixed-gain runs.
    Frozen(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Trigger threshold: the filter acts whenever `φ(x) ≤ theta`.
    pub theta: f64,
    /// Guaranteed recovery rate of `φ` while active.
    pub eta: f64,
    /// Margin that turns the per-coordinate inequalities strict.
    pub slack: f64,
    /// `‖ẋ⁻‖` at or below this is treated as zero (no `Γ` exists).
    pub xdot_tol: f64,
    pub clip_low: Option<f64>,
    pub clip_high: Option<f64>,
    pub alpha_normalization: AlphaNormalization,
    pub gamma_mode: GammaMode,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            theta: 0.001,
            eta: 1.0,
            slack: 1e-3,
            xdot_tol: 1e-9,
            clip_low: None,
            clip_high: None,
            alpha_normalization: AlphaNormalization::Range,
            gamma_mode: GammaMode::Solve,
        }
    }
}

impl FilterConfig {
    pub fn new(theta: f64, eta: f64) -> Result<Self> {
        let cfg = Self { theta, eta, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("filter.{name} must be finite and > 0, got {v}")))
            }
        };
        positive("theta", self.theta)?;
        positive("eta", self.eta)?;
        positive("slack", self.slack)?;
        if !(self.xdot_tol >= 0.0) {
            return Err(Error::config("filter.xdot_tol must be >= 0"));
        }
        if let (Some(lo), Some(hi)) = (self.clip_low, self.clip_high) {
            if !(lo <= hi) {
                return Err(Error::config(format!("filter.clip_low ({lo}) exceeds clip_high ({hi})")));
            }
        }
        if let GammaMode::Frozen(g) = self.gamma_mode {
            if !g.is_finite() {
                return Err(Error::config("frozen gamma must be finite"));
            }
        }
        Ok(())
    }

    fn clip(&self, u: &mut ActionVec) -> bool {
        let mut clipped = false;
        for v in u.iter_mut() {
            let before = *v;
            if let Some(lo) = self.clip_low {
                *v = v.max(lo);
            }
            if let Some(hi) = self.clip_high {
                *v = v.min(hi);
            }
            clipped |= *v != before;
        }
        clipped
    }
}

/// Memory carried between control steps.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub u_last: ActionVec,
    pub x_prev: StateVec,
    /// Maintained by the caller; [`filter_step`] does not read it.
    pub t_prev: f64,
}

impl FilterState {
    /// `u_last ← u_nom(x₀)`, `x⁻ ← x₀`.
    pub fn initialize(x0: StateVec, u_nom0: ActionVec, t0: f64) -> Self {
        Self { u_last: u_nom0, x_prev: x0, t_prev: t0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrectionDiagnostics {
    pub activated: bool,
    pub phi: f64,
    pub alpha: f64,
    /// Coordinates of `∇φ` in the `U` basis (length `d`).
    pub beta: DVector<f64>,
    /// `z_i = ⟨U_i, y⟩` (length `d`, zero beyond the rank).
    pub target_coords: DVector<f64>,
    /// `y = Γ ẋ⁻` in the state basis.
    pub target: DVector<f64>,
    /// Rank-one `Γ` with `Γ ẋ⁻ = y`; `None` when `ẋ⁻` is (numerically) zero.
    pub gamma: Option<DMatrix<f64>>,
    /// Worst-case `ε_i` over the admissible singular values (length `k`).
    pub epsilon_lb: DVector<f64>,
    /// Worst-case `∇φ·ẋ⁺` for the action actually returned, assuming
    /// `ẋ⁻ = f + g u_last`.
    pub guaranteed_rate: f64,
    pub clipped: bool,
}

impl CorrectionDiagnostics {
    fn passthrough(phi: f64) -> Self {
        Self { phi, ..Self::default() }
    }

    /// Whether the returned action still certifies `φ̇⁺ ≥ η`.
    pub fn guarantee_holds(&self, eta: f64) -> bool {
        !self.activated || self.guaranteed_rate >= eta
    }
}

fn nonzero_gradient(grad: &DVector<f64>) -> Result<()> {
    let n = grad.norm();
    if !(n > f64::MIN_POSITIVE) {
        return Err(Error::filter(format!("barrier gradient vanishes (‖∇φ‖ = {n:e})")));
    }
    Ok(())
}

/// `β_i = ⟨∇φ(x), U_i⟩` for `i = 1..d`.
pub fn compute_beta(b: &BarrierFunction, model: &SvdUncertaintyModel, x: &StateVec) -> Result<DVector<f64>> {
    let grad = b.grad(x)?;
    nonzero_gradient(&grad)?;
    beta_from_gradient(model, &grad)
}

fn beta_from_gradient(model: &SvdUncertaintyModel, grad: &DVector<f64>) -> Result<DVector<f64>> {
    if grad.len() != model.state_dim() {
        return Err(Error::config(format!(
            "barrier dimension {} does not match model state dimension {}",
            grad.len(),
            model.state_dim()
        )));
    }
    Ok(model.u_factor().transpose() * grad)
}

/// `α = (⟨∇φ, ẋ⁻⟩ − η) / ‖∇φ‖²`.
pub fn compute_alpha(b: &BarrierFunction, x: &StateVec, xdot_minus: &DVector<f64>, eta: f64) -> Result<f64> {
    let grad = b.grad(x)?;
    nonzero_gradient(&grad)?;
    Ok((grad.dot(xdot_minus) - eta) / grad.norm_squared())
}

/// Target coordinates `z_i` strictly satisfying the four-branch inequality
/// for each `i < k`; coordinates with `β_i = 0` or `i ≥ k` are set to zero.
pub fn solve_target(alpha: f64, beta: &DVector<f64>, lower: &[f64], upper: &[f64], slack: f64) -> DVector<f64> {
    let k = lower.len().min(upper.len()).min(beta.len());
    let mut z = DVector::zeros(beta.len());
    for i in 0..k {
        let b = beta[i];
        let ab = alpha * b;
        z[i] = if b > 0.0 {
            if alpha >= 0.0 {
                ab / upper[i] - slack
            } else {
                ab / lower[i] - slack
            }
        } else if b < 0.0 {
            if alpha <= 0.0 {
                ab / lower[i] + slack
            } else {
                ab / upper[i] + slack
            }
        } else {
            0.0
        };
    }
    z
}

/// `y = Σ z_i U_i`.
pub fn target_in_state_basis(model: &SvdUncertaintyModel, z: &DVector<f64>) -> DVector<f64> {
    model.u_factor() * z
}

/// Rank-one `Γ = y ẋ⁻ᵀ / ‖ẋ⁻‖²`, or `None` when `‖ẋ⁻‖ ≤ xdot_tol`.
pub fn solve_gamma(target: &DVector<f64>, xdot_minus: &DVector<f64>, xdot_tol: f64) -> Option<DMatrix<f64>> {
    let n2 = xdot_minus.norm_squared();
    if n2.sqrt() <= xdot_tol || n2 == 0.0 {
        return None;
    }
    Some(target * xdot_minus.transpose() / n2)
}

/// `u_last − ĝ⁺ y`.
pub fn correction_control(u_last: &ActionVec, model: &SvdUncertaintyModel, target: &DVector<f64>) -> ActionVec {
    u_last - model.apply_g_hat_pinv(target)
}

fn worst_ratio(beta_i: f64, z_i: f64, lower: f64, upper: f64) -> f64 {
    // β_i (α β_i − ρ z_i) is linear in ρ; the minimum sits at an endpoint
    if beta_i * z_i > 0.0 {
        upper
    } else {
        lower
    }
}

/// Worst-case `∇φ·(ẋ⁻ + g Δu)` over all singular values admitted by the model.
fn guaranteed_rate(model: &SvdUncertaintyModel, grad_dot_xdot: f64, beta: &DVector<f64>, delta_u: &ActionVec) -> f64 {
    let v_coords = model.v_factor().transpose() * delta_u;
    let mut rate = grad_dot_xdot;
    for i in 0..model.rank() {
        let base = beta[i] * model.lambda_hat()[i] * v_coords[i];
        rate += (model.lower_ratio()[i] * base).min(model.upper_ratio()[i] * base);
    }
    rate
}

/// One control step of the correction controller.
///
/// Reads only the current state, the backward derivative estimate and
/// `fs.u_last`; afterwards stores the returned action and the current state in `fs`.
pub fn filter_step(
    cfg: &FilterConfig,
    fs: &mut FilterState,
    model: &SvdUncertaintyModel,
    b: &BarrierFunction,
    x: &StateVec,
    xdot_minus: &DVector<f64>,
    u_nom: &ActionVec,
) -> Result<(ActionVec, CorrectionDiagnostics)> {
    let phi = b.eval(x)?;
    if phi > cfg.theta {
        let u = u_nom.clone();
        fs.u_last = u.clone();
        fs.x_prev = x.clone();
        return Ok((u, CorrectionDiagnostics::passthrough(phi)));
    }

    if xdot_minus.len() != model.state_dim() || fs.u_last.len() != model.action_dim() {
        return Err(Error::config("state or action dimension does not match the uncertainty model"));
    }
    let grad = b.grad(x)?;
    nonzero_gradient(&grad)?;
    let beta = beta_from_gradient(model, &grad)?;
    let k = model.rank();
    let grad_dot_xdot = grad.dot(xdot_minus);
    let denom = match cfg.alpha_normalization {
        AlphaNormalization::Full => grad.norm_squared(),
        AlphaNormalization::Range => beta.rows(0, k).norm_squared(),
    };
    if !(denom > f64::MIN_POSITIVE) {
        return Err(Error::filter(
            "barrier gradient is orthogonal to the actuated subspace; no action can change φ",
        ));
    }
    let alpha = (grad_dot_xdot - cfg.eta) / denom;

    let (target_coords, target, gamma) = match cfg.gamma_mode {
        GammaMode::Solve => {
            let z = solve_target(alpha, &beta, model.lower_ratio(), model.upper_ratio(), cfg.slack);
            let y = target_in_state_basis(model, &z);
            let gamma = solve_gamma(&y, xdot_minus, cfg.xdot_tol);
            (z, y, gamma)
        }
        GammaMode::Frozen(g) => {
            let y = xdot_minus * g;
            let z = model.u_factor().transpose() * &y;
            let gamma = Some(DMatrix::identity(y.len(), y.len()) * g);
            (z, y, gamma)
        }
    };

    let mut u = correction_control(&fs.u_last, model, &target);
    let clipped = cfg.clip(&mut u);

    let epsilon_lb = DVector::from_fn(k, |i, _| {
        let rho = worst_ratio(beta[i], target_coords[i], model.lower_ratio()[i], model.upper_ratio()[i]);
        alpha * beta[i] - rho * target_coords[i]
    });
    let delta_u = &u - &fs.u_last;
    let rate = guaranteed_rate(model, grad_dot_xdot, &beta, &delta_u);

    fs.u_last = u.clone();
    fs.x_prev = x.clone();
    Ok((
        u,
        CorrectionDiagnostics {
            activated: true,
            phi,
            alpha,
            beta,
            target_coords,
            target,
            gamma,
            epsilon_lb,
            guaranteed_rate: rate,
            clipped,
        },
    ))
}

/// Right derivative `∇φ(x)·ẋ⁺`.
pub fn right_derivative(b: &BarrierFunction, x: &StateVec, xdot_plus: &DVector<f64>) -> Result<f64> {
    Ok(b.grad(x)?.dot(xdot_plus))
}

/// Drift `f(x₀) = −∇φ(x₀) − g(x₀) u₀` that defeats any controller which
/// committed to `u₀` after seeing only `x₀`: it makes `φ̇⁺(x₀) = −‖∇φ(x₀)‖²`.
pub fn adversarial_f(b: &BarrierFunction, g: &DMatrix<f64>, x0: &StateVec, u0: &ActionVec) -> Result<DVector<f64>> {
    let grad = b.grad(x0)?;
    nonzero_gradient(&grad)?;
    if g.nrows() != grad.len() || g.ncols() != u0.len() {
        return Err(Error::config("actuation matrix shape does not match state/action"));
    }
    Ok(-grad - g * u0)
}

/// A correction controller bound to a barrier and a model source.
#[derive(Clone)]
pub struct SafetyFilter {
    cfg: FilterConfig,
    barrier: BarrierFunction,
    knowledge: Arc<dyn ActuationKnowledge>,
    state: Option<FilterState>,
}

impl SafetyFilter {
    pub fn new(cfg: FilterConfig, barrier: BarrierFunction, knowledge: Arc<dyn ActuationKnowledge>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, barrier, knowledge, state: None })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn barrier(&self) -> &BarrierFunction {
        &self.barrier
    }

    pub fn state(&self) -> Option<&FilterState> {
        self.state.as_ref()
    }

    pub fn initialize(&mut self, x0: &StateVec, u_nom0: &ActionVec, t0: f64) {
        self.state = Some(FilterState::initialize(x0.clone(), u_nom0.clone(), t0));
    }

    /// Runs [`filter_step`] against the stored state.
    pub fn step(&mut self, x: &StateVec, xdot_minus: &DVector<f64>, u_nom: &ActionVec, t: f64) -> Result<(ActionVec, CorrectionDiagnostics)> {
        let fs = self
            .state
            .as_mut()
            .ok_or_else(|| Error::filter("filter used before initialize()"))?;
        let model = self.knowledge.model_at(x)?;
        let out = filter_step(&self.cfg, fs, &model, &self.barrier, x, xdot_minus, u_nom)?;
        fs.t_prev = t;
        Ok(out)
    }

    /// Uses the backward difference of the window as `ẋ⁻`.
    pub fn step_window(&mut self, w: &InformationWindow, u_nom: &ActionVec, t: f64) -> Result<(ActionVec, CorrectionDiagnostics)> {
        self.step(&w.x_now, &w.xdot_minus(), u_nom, t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn interval() -> BarrierFunction {
        BarrierFunction::new(
            "interval",
            1,
            |x: &StateVec| 1.0 - 25.0 * x[0] * x[0],
            |x: &StateVec| DVector::from_element(1, -50.0 * x[0]),
        )
    }

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn beta_scalar_example() {
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        let beta = compute_beta(&interval(), &m, &v1(0.1999)).unwrap();
        assert_relative_eq!(beta[0], -9.995, epsilon = 1e-12);
    }

    #[test]
    fn beta_aligned_with_first_column_and_parseval() {
        let c = 0.6;
        let s = 0.8;
        let u = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let model = SvdUncertaintyModel::new(u, DMatrix::identity(1, 1), vec![1.0], vec![1.0], vec![1.0]).unwrap();
        let b = BarrierFunction::new(
            "linear",
            2,
            |x: &StateVec| 3.0 * x[0] + 4.0 * x[1],
            |_: &StateVec| DVector::from_row_slice(&[3.0, 4.0]),
        );
        let x = DVector::zeros(2);
        let beta = compute_beta(&b, &model, &x).unwrap();
        assert_relative_eq!(beta, DVector::from_row_slice(&[5.0, 0.0]), epsilon = 1e-12);
        assert_relative_eq!(beta.norm_squared(), 25.0, epsilon = 1e-12);
    }

    #[test]
    fn beta_rejects_zero_gradient() {
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        assert!(matches!(compute_beta(&interval(), &m, &v1(0.0)), Err(Error::Filter(_))));
    }

    #[test]
    fn alpha_examples() {
        let unit = BarrierFunction::new("u", 1, |x: &StateVec| x[0], |_: &StateVec| v1(1.0));
        assert_eq!(compute_alpha(&unit, &v1(0.0), &v1(0.0), 1.0).unwrap(), -1.0);
        assert_eq!(compute_alpha(&unit, &v1(0.0), &v1(2.5), 2.5).unwrap(), 0.0);

        let x = 0.1999;
        let alpha = compute_alpha(&interval(), &v1(x), &v1(0.5 * x), 1.0).unwrap();
        let g = -50.0 * x;
        assert_relative_eq!(alpha, (g * 0.5 * x - 1.0) / (g * g), epsilon = 1e-15);
        assert!((alpha + 0.020010).abs() < 5e-7);
    }

    #[test]
    fn target_examples() {
        let z = solve_target(-0.02, &v1(-19.99), &[1.0], &[1.0], 0.1);
        assert_relative_eq!(z[0], 0.02 * 19.99 + 0.1, epsilon = 1e-14);
        let z = solve_target(-0.02, &v1(0.0), &[1.0], &[1.0], 0.1);
        assert_eq!(z[0], 0.0);
        let z = solve_target(0.0, &DVector::from_row_slice(&[1.0, 2.0]), &[1.0, 1.0], &[2.0, 2.0], 0.1);
        assert_eq!(z, DVector::from_row_slice(&[-0.1, -0.1]));
    }

    #[test]
    fn target_branches_are_strict() {
        let cases = [(0.5, 2.0), (-0.5, 2.0), (-0.5, -2.0), (0.5, -2.0), (0.0, -1.0)];
        let (m, big_m) = (0.5, 3.0);
        for (alpha, beta) in cases {
            let z = solve_target(alpha, &v1(beta), &[m], &[big_m], 1e-3)[0];
            let ab = alpha * beta;
            match (alpha >= 0.0, beta >= 0.0) {
                (true, true) => assert!(ab / big_m > z),
                (false, true) => assert!(ab / m > z),
                (_, false) if alpha <= 0.0 => assert!(ab / m < z),
                _ => assert!(ab / big_m < z),
            }
        }
    }

    #[test]
    fn gamma_examples() {
        let g = solve_gamma(&v1(2.0), &v1(0.5), 1e-9).unwrap();
        assert_relative_eq!(g[(0, 0)], 4.0, epsilon = 1e-15);
        assert!(solve_gamma(&v1(2.0), &v1(0.0), 1e-9).is_none());
        let y = DVector::from_row_slice(&[0.3, -1.2, 4.0]);
        let xd = DVector::from_row_slice(&[0.1, 0.7, -0.2]);
        let g = solve_gamma(&y, &xd, 1e-9).unwrap();
        assert!((g * xd - y).norm() < 1e-12);
    }

    #[test]
    fn correction_examples() {
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        assert_eq!(correction_control(&v1(-0.1999), &m, &v1(0.0)), v1(-0.1999));
        let u = correction_control(&v1(-0.1999), &m, &v1(0.5998));
        assert_relative_eq!(u[0], -0.7997, epsilon = 1e-14);
    }

    #[test]
    fn correction_rank_one_in_four_states() {
        let lam = 0.51;
        let model = SvdUncertaintyModel::new(DMatrix::identity(4, 4), DMatrix::identity(1, 1), vec![lam], vec![0.2], vec![5.0]).unwrap();
        let y = DVector::from_row_slice(&[0.4, -3.0, 7.0, 1.0]);
        let u = correction_control(&v1(2.0), &model, &y);
        assert_relative_eq!(u[0] - 2.0, -0.4 / lam, epsilon = 1e-14);
    }

    #[test]
    fn passthrough_is_bitwise() {
        let cfg = FilterConfig::new(0.001, 1.0).unwrap();
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        let x = v1(0.0632455532); // φ ≈ 0.9
        let mut fs = FilterState::initialize(x.clone(), v1(0.0), 0.0);
        let u_nom = v1(0.123456789);
        let (u, d) = filter_step(&cfg, &mut fs, &m, &interval(), &x, &v1(0.0), &u_nom).unwrap();
        assert!(!d.activated);
        assert_eq!(u[0].to_bits(), u_nom[0].to_bits());
        assert_eq!(fs.u_last, u_nom);
    }

    #[test]
    fn activates_at_boundary_and_updates_state() {
        let cfg = FilterConfig::new(0.001, 1.0).unwrap();
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        let x = v1(0.1999);
        assert!(interval().eval(&x).unwrap() <= 0.001);
        let mut fs = FilterState::initialize(x.clone(), v1(-0.1999), 0.0);
        let xdot = v1(1.5 * 0.1999 - 0.1999);
        let (u, d) = filter_step(&cfg, &mut fs, &m, &interval(), &x, &xdot, &v1(-0.1999)).unwrap();
        assert!(d.activated);
        assert_eq!(fs.u_last, u);
        assert_eq!(fs.x_prev, x);
        for i in 0..m.rank() {
            assert!(d.beta[i] * d.epsilon_lb[i] >= 0.0);
        }
        assert!(d.guaranteed_rate >= cfg.eta);
        // exact knowledge: φ̇⁺ with the true dynamics
        let rate = -50.0 * 0.1999 * (1.5 * 0.1999 + u[0]);
        assert!(rate >= cfg.eta);
        assert!(d.gamma.is_some());
    }

    #[test]
    fn degenerate_xdot_still_corrects() {
        let cfg = FilterConfig::new(0.001, 1.0).unwrap();
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        let x = v1(0.25);
        let mut fs = FilterState::initialize(x.clone(), v1(-0.25), 0.0);
        let (u, d) = filter_step(&cfg, &mut fs, &m, &interval(), &x, &v1(0.0), &v1(-0.25)).unwrap();
        assert!(d.gamma.is_none());
        assert!(u[0] < -0.25);
    }

    #[test]
    fn clipping_is_reported() {
        let mut cfg = FilterConfig::new(0.001, 1.0).unwrap();
        cfg.clip_low = Some(-0.3);
        cfg.clip_high = Some(0.3);
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        let x = v1(0.25);
        let mut fs = FilterState::initialize(x.clone(), v1(-0.25), 0.0);
        let (u, d) = filter_step(&cfg, &mut fs, &m, &interval(), &x, &v1(10.0), &v1(-0.25)).unwrap();
        assert!(d.clipped);
        assert_eq!(u[0], -0.3);
        assert!(!d.guarantee_holds(cfg.eta));
    }

    #[test]
    fn frozen_gamma_mode() {
        let mut cfg = FilterConfig::new(0.001, 1.0).unwrap();
        cfg.gamma_mode = GammaMode::Frozen(4.0);
        let m = SvdUncertaintyModel::scalar(1.0, 1.0, 1.0).unwrap();
        let x = v1(0.1999);
        let mut fs = FilterState::initialize(x.clone(), v1(-0.1999), 0.0);
        let (u, _) = filter_step(&cfg, &mut fs, &m, &interval(), &x, &v1(0.5), &v1(-0.1999)).unwrap();
        assert_relative_eq!(u[0], -0.1999 - 2.0, epsilon = 1e-14);
    }

    #[test]
    fn adversarial_examples() {
        let b = interval();
        let x0 = v1(0.2);
        let g = DMatrix::from_element(1, 1, 1.0);
        let f = adversarial_f(&b, &g, &x0, &v1(3.0)).unwrap();
        assert_relative_eq!(f[0], 10.0 - 3.0, epsilon = 1e-12);
        let rate = right_derivative(&b, &x0, &(&f + &g * v1(3.0))).unwrap();
        assert_relative_eq!(rate, -100.0, epsilon = 1e-9);
        let f0 = adversarial_f(&b, &g, &x0, &v1(0.0)).unwrap();
        assert_relative_eq!(f0[0], 10.0, epsilon = 1e-12);
        assert!(adversarial_f(&b, &g, &v1(0.0), &v1(1.0)).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(FilterConfig::new(0.0, 1.0).is_err());
        assert!(FilterConfig::new(0.1, 0.0).is_err());
        let cfg = FilterConfig { slack: 0.0, ..FilterConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = FilterConfig { clip_low: Some(1.0), clip_high: Some(-1.0), ..FilterConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
