use crate::barrier::{ActionVec, InformationWindow, StateVec};
use crate::error::Result;
use crate::filter::{CorrectionDiagnostics, SafetyFilter};

use super::{AffineSystem, Nominal};

#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub u: ActionVec,
    pub activated: bool,
}

/// A feedback law that sees only the two-sample information window.
pub trait Controller {
    /// Returns `u_{−1}`, the action considered held before the first sample.
    fn init(&mut self, x0: &StateVec) -> Result<ActionVec>;
    fn act(&mut self, window: &InformationWindow, t: f64) -> Result<Decision>;
}

pub struct NominalController(pub Nominal);

impl Controller for NominalController {
    fn init(&mut self, x0: &StateVec) -> Result<ActionVec> {
        Ok((self.0)(x0))
    }

    fn act(&mut self, w: &InformationWindow, _t: f64) -> Result<Decision> {
        Ok(Decision { u: (self.0)(&w.x_now), activated: false })
    }
}

/// Source of `ẋ⁻` for the filter.
#[derive(Clone, Debug)]
pub enum XdotSource {
    /// `(x_now − x_prev) / δ`.
    FiniteDifference,
    /// `f(x) + g(x) u_last` evaluated on the true system. For property tests only.
    Oracle(AffineSystem),
}

/// A nominal law wrapped by the correction controller.
pub struct FilteredController {
    filter: SafetyFilter,
    nominal: Nominal,
    xdot: XdotSource,
    keep_diagnostics: bool,
    diagnostics: Vec<CorrectionDiagnostics>,
    clip_breaks: usize,
}

impl FilteredController {
    pub fn new(filter: SafetyFilter, nominal: Nominal) -> Self {
        Self {
            filter,
            nominal,
            xdot: XdotSource::FiniteDifference,
            keep_diagnostics: false,
            diagnostics: Vec::new(),
            clip_breaks: 0,
        }
    }

    pub fn with_xdot_source(mut self, source: XdotSource) -> Self {
        self.xdot = source;
        self
    }

    /// Keep every step's diagnostics (memory grows with the horizon).
    pub fn recording(mut self) -> Self {
        self.keep_diagnostics = true;
        self
    }

    pub fn diagnostics(&self) -> &[CorrectionDiagnostics] {
        &self.diagnostics
    }

    /// Activated steps where clipping left the rate guarantee unmet.
    pub fn clip_breaks(&self) -> usize {
        self.clip_breaks
    }

    pub fn filter(&self) -> &SafetyFilter {
        &self.filter
    }
}

impl Controller for FilteredController {
    fn init(&mut self, x0: &StateVec) -> Result<ActionVec> {
        let u0 = (self.nominal)(x0);
        self.filter.initialize(x0, &u0, 0.0);
        Ok(u0)
    }

    fn act(&mut self, w: &InformationWindow, t: f64) -> Result<Decision> {
        let u_nom = (self.nominal)(&w.x_now);
        let xdot = match &self.xdot {
            XdotSource::FiniteDifference => w.xdot_minus(),
            XdotSource::Oracle(sys) => sys.xdot(&w.x_now, &w.u_last),
        };
        let (u, diag) = self.filter.step(&w.x_now, &xdot, &u_nom, t)?;
        if diag.clipped && !diag.guarantee_holds(self.filter.config().eta) {
            self.clip_breaks += 1;
        }
        let activated = diag.activated;
        if self.keep_diagnostics {
            self.diagnostics.push(diag);
        }
        Ok(Decision { u, activated })
    }
}
