//! The learned distance: loss terms, the training step and the reward
//! computed from per-step encoding distances.

mod eval;
mod loss;
mod profile;

pub use eval::{class_separation, sequence_code, Separation};
pub use loss::{
    bernoulli_ce, build_loss, gaussian_kl, metric_train_step, triplet_hinge, LossNodes, LossReport,
    MetricLossWeights, StepNoise,
};
pub use profile::{
    distance_profile, reward_from_distance, shaped_reward, DistanceMode, DistanceProfile,
    RewardKind,
};
