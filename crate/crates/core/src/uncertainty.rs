//! Partial knowledge of the actuation matrix `g(x) = U Σ Vᵀ`.
//!
//! The singular vectors `U`, `V` are known exactly. Each non-zero singular
//! value `λ_i` is known only through an estimate `λ̂_i` and multiplicative
//! bounds `m_i λ̂_i ≤ λ_i ≤ M_i λ̂_i`. The true values live in
//! [`TrueActuation`], which the filter never sees.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;

use crate::barrier::StateVec;
use crate::error::{Error, Result};

/// Maximum entry of `QᵀQ − I` accepted for the singular-vector factors.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SvdUncertaintyModel {
    u_factor: DMatrix<f64>,
    v_factor: DMatrix<f64>,
    lambda_hat: Vec<f64>,
    lower_ratio: Vec<f64>,
    upper_ratio: Vec<f64>,
}

fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    let n = q.nrows();
    (q.transpose() * q - DMatrix::<f64>::identity(n, n)).amax()
}

impl SvdUncertaintyModel {
    pub fn new(
        u_factor: DMatrix<f64>,
        v_factor: DMatrix<f64>,
        lambda_hat: Vec<f64>,
        lower_ratio: Vec<f64>,
        upper_ratio: Vec<f64>,
    ) -> Result<Self> {
        if !u_factor.is_square() || !v_factor.is_square() {
            return Err(Error::config("singular-vector factors must be square"));
        }
        let d = u_factor.nrows();
        let p = v_factor.nrows();
        let k = lambda_hat.len();
        if k == 0 || k > d.min(p) {
            return Err(Error::config(format!("rank {k} must lie in 1..={}", d.min(p))));
        }
        if lower_ratio.len() != k || upper_ratio.len() != k {
            return Err(Error::config("ratio bounds must have one entry per singular value"));
        }
        let du = orthogonality_defect(&u_factor);
        if !(du < ORTHOGONALITY_TOL) {
            return Err(Error::config(format!("U is not orthogonal (defect {du:e})")));
        }
        let dv = orthogonality_defect(&v_factor);
        if !(dv < ORTHOGONALITY_TOL) {
            return Err(Error::config(format!("V is not orthogonal (defect {dv:e})")));
        }
        for i in 0..k {
            if !(lambda_hat[i] > 0.0) || !lambda_hat[i].is_finite() {
                return Err(Error::config(format!("singular value estimate {i} must be > 0, got {}", lambda_hat[i])));
            }
            if !(lower_ratio[i] > 0.0) || !(upper_ratio[i] >= lower_ratio[i]) || !upper_ratio[i].is_finite() {
                return Err(Error::config(format!(
                    "ratio bounds {i} must satisfy 0 < m <= M, got m = {}, M = {}",
                    lower_ratio[i], upper_ratio[i]
                )));
            }
        }
        Ok(Self { u_factor, v_factor, lambda_hat, lower_ratio, upper_ratio })
    }

    /// Scalar system with `U = V = [1]`.
    pub fn scalar(lambda_hat: f64, lower: f64, upper: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
            vec![lambda_hat],
            vec![lower],
            vec![upper],
        )
    }

    pub fn state_dim(&self) -> usize {
        self.u_factor.nrows()
    }

    pub fn action_dim(&self) -> usize {
        self.v_factor.nrows()
    }

    pub fn rank(&self) -> usize {
        self.lambda_hat.len()
    }

    pub fn u_factor(&self) -> &DMatrix<f64> {
        &self.u_factor
    }

    pub fn v_factor(&self) -> &DMatrix<f64> {
        &self.v_factor
    }

    pub fn u_column(&self, i: usize) -> DVectorView<'_, f64> {
        self.u_factor.column(i)
    }

    pub fn lambda_hat(&self) -> &[f64] {
        &self.lambda_hat
    }

    pub fn lower_ratio(&self) -> &[f64] {
        &self.lower_ratio
    }

    pub fn upper_ratio(&self) -> &[f64] {
        &self.upper_ratio
    }

    /// `Σ̂`, the `d × p` matrix with `λ̂_i` on the leading diagonal.
    pub fn sigma_hat(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.state_dim(), self.action_dim());
        for (i, &l) in self.lambda_hat.iter().enumerate() {
            s[(i, i)] = l;
        }
        s
    }

    /// Moore–Penrose pseudo-inverse of `Σ̂` (`p × d`).
    pub fn sigma_hat_pinv(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.action_dim(), self.state_dim());
        for (i, &l) in self.lambda_hat.iter().enumerate() {
            s[(i, i)] = 1.0 / l;
        }
        s
    }

    /// `ĝ⁺ = V Σ̂⁺ Uᵀ`.
    pub fn g_hat_pinv(&self) -> DMatrix<f64> {
        &self.v_factor * self.sigma_hat_pinv() * self.u_factor.transpose()
    }

    /// `ĝ⁺ y` without forming the matrix.
    pub fn apply_g_hat_pinv(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut coeffs = DVector::zeros(self.action_dim());
        for i in 0..self.rank() {
            coeffs[i] = self.u_factor.column(i).dot(y) / self.lambda_hat[i];
        }
        &self.v_factor * coeffs
    }
}

pub fn sigma_hat_pinv(model: &SvdUncertaintyModel) -> DMatrix<f64> {
    model.sigma_hat_pinv()
}

pub fn g_hat_pinv(model: &SvdUncertaintyModel) -> DMatrix<f64> {
    model.g_hat_pinv()
}

/// Where the filter obtains its model at a given state. Constant models
/// implement this directly; state-dependent factors go through
/// [`StateDependentModel`].
pub trait ActuationKnowledge: Send + Sync {
    fn model_at(&self, x: &StateVec) -> Result<Cow<'_, SvdUncertaintyModel>>;
}

impl ActuationKnowledge for SvdUncertaintyModel {
    fn model_at(&self, _x: &StateVec) -> Result<Cow<'_, SvdUncertaintyModel>> {
        Ok(Cow::Borrowed(self))
    }
}

pub struct StateDependentModel<F>(pub F);

impl<F> ActuationKnowledge for StateDependentModel<F>
where
    F: Fn(&StateVec) -> Result<SvdUncertaintyModel> + Send + Sync,
{
    fn model_at(&self, x: &StateVec) -> Result<Cow<'_, SvdUncertaintyModel>> {
        (self.0)(x).map(Cow::Owned)
    }
}

/// The hidden singular values `λ_i`. Only simulators and test oracles hold one.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueActuation {
    lambda_true: Vec<f64>,
}

impl TrueActuation {
    /// Checks `m_i λ̂_i ≤ λ_i ≤ M_i λ̂_i` (to a relative rounding allowance).
    pub fn new(model: &SvdUncertaintyModel, lambda_true: Vec<f64>) -> Result<Self> {
        if lambda_true.len() != model.rank() {
            return Err(Error::config("true singular values must match the model rank"));
        }
        for (i, &l) in lambda_true.iter().enumerate() {
            let lo = model.lower_ratio[i] * model.lambda_hat[i];
            let hi = model.upper_ratio[i] * model.lambda_hat[i];
            let tol = 1e-12 * hi.abs();
            if !(l >= lo - tol && l <= hi + tol) {
                return Err(Error::config(format!(
                    "true singular value {i} = {l} violates bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lambda_true })
    }

    /// Draws each `λ_i` uniformly from its admissible interval.
    pub fn sample_uniform<R: Rng + ?Sized>(model: &SvdUncertaintyModel, rng: &mut R) -> Self {
        let lambda_true = (0..model.rank())
            .map(|i| {
                let lo = model.lower_ratio[i] * model.lambda_hat[i];
                let hi = model.upper_ratio[i] * model.lambda_hat[i];
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo
                }
            })
            .collect();
        Self { lambda_true }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda_true
    }

    /// `U Σ Vᵀ` with the true singular values.
    pub fn actuation_matrix(&self, model: &SvdUncertaintyModel) -> DMatrix<f64> {
        let mut sigma = DMatrix::zeros(model.state_dim(), model.action_dim());
        for (i, &l) in self.lambda_true.iter().enumerate() {
            sigma[(i, i)] = l;
        }
        model.u_factor() * sigma * model.v_factor().transpose()
    }
}

/// Rough prior knowledge of the front cornering stiffness.
#[derive(Clone, Copy, Debug)]
pub struct StiffnessGuess {
    pub cf_estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// SVD of the single-input bicycle actuation column `[c_f/m, c_f a₁/I_z]ᵀ`.
///
/// The stiffness cancels in the normalised singular vector, so `U` and `V` are
/// exact while `λ̂` comes from the stiffness estimate. Errors when the guess
/// bounds do not bracket the true singular value.
pub fn bicycle_svd(
    mass: f64,
    a1: f64,
    iz: f64,
    cf_hidden: f64,
    guess: StiffnessGuess,
) -> Result<(SvdUncertaintyModel, TrueActuation)> {
    for (name, v) in [("mass", mass), ("a1", a1), ("iz", iz), ("cf", cf_hidden), ("cf_estimate", guess.cf_estimate)] {
        if !(v > 0.0) {
            return Err(Error::config(format!("bicycle parameter {name} must be > 0")));
        }
    }
    let l1 = cf_hidden / mass;
    let l2 = cf_hidden * a1 / iz;
    let lambda = l1.hypot(l2);
    // the normalised entries do not depend on the stiffness
    let n = (1.0 / mass).hypot(a1 / iz);
    let (c1, c2) = ((1.0 / mass) / n, (a1 / iz) / n);
    let u = DMatrix::from_row_slice(2, 2, &[c1, c2, c2, -c1]);
    let lambda_hat = guess.cf_estimate * n;
    let model = SvdUncertaintyModel::new(
        u,
        DMatrix::identity(1, 1),
        vec![lambda_hat],
        vec![guess.lower],
        vec![guess.upper],
    )?;
    let truth = TrueActuation::new(&model, vec![lambda])?;
    Ok((model, truth))
}
