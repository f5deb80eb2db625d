//! Convex body chasing over the discrete-time model `x⁺ = αx + βu`.
//!
//! Every observed transition cuts the parameter polygon with the strip
//! `|αx + βu − x⁺| ≤ η`; the candidate follows by Euclidean projection.

use nalgebra::DVector;

use crate::barrier::{ActionVec, InformationWindow, StateVec};
use crate::dynamics::{Controller, Decision};
use crate::error::{Error, Result};

use super::polygon::ConvexPolygon;
use super::BaselineSettings;

#[derive(Clone, Debug, PartialEq)]
pub struct CbcState {
    /// Accepted transitions `(x_i, u_i, x_{i+1})`.
    pub constraints: Vec<(f64, f64, f64)>,
    pub polygon: ConvexPolygon,
    /// Current `(α, β)`.
    pub candidate: (f64, f64),
    pub eta: f64,
    /// Transitions rejected because they emptied the polygon.
    pub rejected: usize,
}

impl CbcState {
    pub fn new(alpha_bound: f64, beta_min: f64, beta_max: f64, eta: f64) -> Result<Self> {
        if !(alpha_bound > 0.0) || !(0.0 < beta_min && beta_min <= beta_max) || !(eta > 0.0) {
            return Err(Error::config("cbc needs alpha_bound > 0, 0 < beta_min <= beta_max and eta > 0"));
        }
        Ok(Self {
            constraints: Vec::new(),
            polygon: ConvexPolygon::from_box(-alpha_bound, alpha_bound, beta_min, beta_max),
            candidate: (0.0, 0.5 * (beta_min + beta_max)),
            eta,
            rejected: 0,
        })
    }

    /// Adds the strip for one transition and moves the candidate into the new polygon.
    pub fn observe(&mut self, x: f64, u: f64, x_next: f64) {
        let clipped = self.polygon.clip([x, u], x_next + self.eta).clip([-x, -u], self.eta - x_next);
        if clipped.is_empty() {
            self.rejected += 1;
            return;
        }
        self.polygon = clipped;
        self.constraints.push((x, u, x_next));
        // the candidate already lies in the previous polygon; only the new strip can exclude it
        let (a, b) = self.candidate;
        if (a * x + b * u - x_next).abs() <= self.eta {
            return;
        }
        if let Some([a, b]) = self.polygon.project([a, b]) {
            self.candidate = (a, b);
        }
    }

    /// Largest violation of the stored strips at `(α, β)`.
    pub fn max_violation(&self, alpha: f64, beta: f64) -> f64 {
        self.constraints
            .iter()
            .map(|&(x, u, xn)| ((alpha * x + beta * u - xn).abs() - self.eta).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Incorporates the last transition (if any) and returns `−(α/β) x`.
pub fn cbc_control(s: &mut CbcState, x: f64, last: Option<(f64, f64)>) -> f64 {
    if let Some((x_prev, u_prev)) = last {
        s.observe(x_prev, u_prev, x);
    }
    let (alpha, beta) = s.candidate;
    -(alpha / beta) * x
}

pub struct CbcController {
    pub state: CbcState,
    clip: f64,
    step: usize,
}

impl CbcController {
    pub fn new(settings: &BaselineSettings) -> Result<Self> {
        if !(settings.cbc_control_clip > 0.0) {
            return Err(Error::config("cbc_control_clip must be > 0"));
        }
        Ok(Self {
            state: CbcState::new(settings.cbc_alpha_bound, settings.cbc_beta_min, settings.cbc_beta_max, settings.cbc_eta)?,
            clip: settings.cbc_control_clip,
            step: 0,
        })
    }
}

impl Controller for CbcController {
    fn init(&mut self, _x0: &StateVec) -> Result<ActionVec> {
        Ok(DVector::zeros(1))
    }

    fn act(&mut self, w: &InformationWindow, _t: f64) -> Result<Decision> {
        let last = (self.step > 0).then(|| (w.x_prev[0], w.u_last[0]));
        self.step += 1;
        let u = cbc_control(&mut self.state, w.x_now[0], last).clamp(-self.clip, self.clip);
        Ok(Decision { u: DVector::from_element(1, u), activated: true })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truth(ts: f64) -> (f64, f64) {
        ((1.5 * ts).exp(), ((1.5 * ts).exp() - 1.0) / 1.5)
    }

    #[test]
    fn candidate_inside_is_kept() {
        let mut s = CbcState::new(5.0, 2.5e-6, 0.05, 1e-6).unwrap();
        let start = s.candidate;
        assert_eq!(start, (0.0, 0.5 * (2.5e-6 + 0.05)));
        s.observe(0.2, 4.0, 4.0 * start.1);
        assert_eq!(s.candidate, start);
    }

    #[test]
    fn projection_satisfies_all_strips_and_nests() {
        let ts = 2.5e-4;
        let (a_true, b_true) = truth(ts);
        let mut s = CbcState::new(5.0, 2.5e-6, 0.05, 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut x = 0.1999;
        let mut previous = s.clone();
        for _ in 0..60 {
            let u = -(s.candidate.0 / s.candidate.1) * x + rng.random_range(-0.5..0.5);
            let u = u.clamp(-100.0, 100.0);
            let xn = a_true * x + b_true * u;
            s.observe(x, u, xn);
            assert!(s.max_violation(s.candidate.0, s.candidate.1) <= 1e-9);
            // nesting: the new candidate and random points of the new polygon satisfy all older strips
            assert!(previous.max_violation(s.candidate.0, s.candidate.1) <= 1e-9);
            let v = s.polygon.vertices().to_vec();
            for _ in 0..100 {
                let w: Vec<f64> = (0..v.len()).map(|_| rng.random::<f64>()).collect();
                let tot: f64 = w.iter().sum();
                let p = v.iter().zip(&w).fold([0.0, 0.0], |acc, (q, wi)| [acc[0] + q[0] * wi / tot, acc[1] + q[1] * wi / tot]);
                assert!(previous.max_violation(p[0], p[1]) <= 1e-9);
                assert!(s.max_violation(p[0], p[1]) <= 1e-9);
            }
            previous = s.clone();
            x = xn;
        }
        assert_eq!(s.rejected, 0);
        // the truth is never cut away, and the candidate ends up close to it
        assert!(s.max_violation(a_true, b_true) == 0.0);
        assert!((s.candidate.0 - a_true).abs() < 1e-3, "{:?}", s.candidate);
        assert!((s.candidate.1 - b_true).abs() < 1e-4, "{:?}", s.candidate);
    }

    #[test]
    fn control_is_cancellation() {
        let mut s = CbcState::new(5.0, 2.5e-6, 0.05, 1e-6).unwrap();
        assert_eq!(cbc_control(&mut s, 0.2, None), 0.0);
        s.candidate = (1.0, 0.5);
        assert_eq!(cbc_control(&mut s, 0.2, None), -0.4);
    }
}
