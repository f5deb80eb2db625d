//! Comparison controllers for the scalar benchmark `ẋ = 1.5x + u`.
//!
//! All of them see the same two-sample window as the correction controller
//! and keep their own parameter estimates.

mod adaptive;
mod cbc;
mod polygon;

use serde::{Deserialize, Serialize};

use crate::dynamics::Nominal;
use crate::error::Result;

pub use adaptive::{
    acbf_control, racbf_control, smid_update, AcbfController, AcbfState, RacbfController, RacbfState, ScalarCbfModel,
    SmidSample,
};
pub use cbc::{cbc_control, CbcController, CbcState};
pub use polygon::ConvexPolygon;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Acbf,
    Racbf,
    Racbfs,
    Cbc,
}

impl BaselineKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::Acbf => "acbf",
            Self::Racbf => "racbf",
            Self::Racbfs => "racbfs",
            Self::Cbc => "cbc",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    pub model: ScalarCbfModel,
    /// Adaptation gain of the parameter estimate.
    pub adaptation_gain: f64,
    pub theta_hat0: f64,
    /// Initial half-width of the parameter error interval.
    pub nu_tilde0: f64,
    /// Residual bound used by set-membership identification.
    pub smid_residual_bound: f64,
    /// Seconds between uncertainty-bound updates.
    pub smid_period: f64,
    pub cbc_alpha_bound: f64,
    pub cbc_beta_min: f64,
    pub cbc_beta_max: f64,
    pub cbc_eta: f64,
    /// Symmetric clamp on the cancellation control.
    pub cbc_control_clip: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            model: ScalarCbfModel::default(),
            adaptation_gain: 5.0,
            theta_hat0: 0.0,
            nu_tilde0: 2.0,
            smid_residual_bound: 0.07,
            smid_period: 2.5e-3,
            cbc_alpha_bound: 5.0,
            cbc_beta_min: 2.5e-6,
            cbc_beta_max: 0.05,
            cbc_eta: 1e-6,
            cbc_control_clip: 100.0,
        }
    }
}

/// Builds a baseline as a boxed [`crate::dynamics::Controller`].
pub fn build_baseline(
    kind: BaselineKind,
    settings: &BaselineSettings,
    dt: f64,
    nominal: Nominal,
) -> Result<Box<dyn crate::dynamics::Controller + Send>> {
    Ok(match kind {
        BaselineKind::Acbf => Box::new(AcbfController::new(settings, dt, nominal)?),
        BaselineKind::Racbf => Box::new(RacbfController::new(settings, dt, nominal, false)?),
        BaselineKind::Racbfs => Box::new(RacbfController::new(settings, dt, nominal, true)?),
        BaselineKind::Cbc => Box::new(CbcController::new(settings)?),
    })
}
