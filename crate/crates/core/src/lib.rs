//! Sample-minimal safe control.
//!
//! The crate is organised around a correction controller that keeps a
//! control-affine system `ẋ = f(x) + g(x)u` inside the super-level set of a
//! barrier function while knowing nothing about `f` and only the singular
//! vectors (plus ratio bounds on the singular values) of `g`. The controller
//! needs a two-sample window: the current state, the previous state and the
//! last action played.
//!
//! * [`barrier`]: barrier functions, safe subsets and information windows.
//! * [`uncertainty`]: the partial SVD knowledge of `g` and the estimated pseudo-inverse.
//! * [`filter`]: the correction controller itself plus the one-sample impossibility witness.
//! * [`dynamics`]: zero-order-hold closed-loop simulation and the benchmark systems.
//! * [`baselines`]: adaptive CBF, robust adaptive CBF (with set-membership
//!   identification) and convex-body-chasing controllers for the scalar benchmark.
//! * [`rl`]: shielded REINFORCE with a small Gaussian MLP policy and a tabular
//!   unbiasedness oracle.
//! * [`harness`]: configuration, scenarios, metrics and run manifests used by the CLI.

// `!(x > 0.0)` is the intended spelling: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod barrier;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod harness;
pub mod rl;
pub mod uncertainty;

pub use barrier::{ActionVec, BarrierFunction, InformationWindow, SafeSubset, StateVec};
pub use error::{Error, Result};
pub use filter::{CorrectionDiagnostics, FilterConfig, FilterState, SafetyFilter};
pub use uncertainty::{SvdUncertaintyModel, TrueActuation};
