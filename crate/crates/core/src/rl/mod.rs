//! Shielded REINFORCE: a Gaussian MLP policy, episode roll-outs through the
//! correction controller, the score-function gradient estimate and a tabular
//! oracle for its bias.

pub mod checkpoint;
mod policy;
mod reinforce;
mod rollout;
pub mod tabular;

pub use policy::{sample_action, GaussianPolicy};
pub use reinforce::{
    discounted_return, estimate_gradient, score_times_return, sgd_update, train, EpisodeSummary, TrainConfig,
    TrainingLog,
};
pub use rollout::{rollout, shield, Environment, EpisodeTask, Rollout, Shield, StepRecord};
