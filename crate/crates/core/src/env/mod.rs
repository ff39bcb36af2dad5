//! A planar three-link chain standing on one foot, driven by PD joint
//! targets at a fixed control rate. The learner sees joint state; the metric
//! sees rendered frames; the oracle pose reward is for evaluation only.

mod chain;
mod clips;
mod render;

pub use chain::{
    oracle_reward, ChainEnv, EnvConfig, Observation, PoseState, StepInfo, StepOutcome, J, LINK,
};
pub use clips::{class_separation, motion_library, ClipKind, MotionClip};
pub use render::{render, render_into, VIEW_HALF_EXTENT};
