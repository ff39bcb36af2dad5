//! Policy-gradient training on pose observations.

mod advantage;
mod policy;
mod rollout;
mod update;

pub use advantage::{discounted_returns, discounted_returns_bootstrapped, gae, normalize};
pub use policy::{
    observe, GaussianPolicy, MlpConfig, ValueFunction, OBS_DIM, POLICY_PREFIX, VALUE_PREFIX,
};
pub use rollout::{collect, rollout_episode, EvalTrace, Trajectory};
pub use update::{policy_update, value_update, PolicyBatch, UpdateConfig, UpdateReport};
