//! Positive/negative pair construction for training the metric: temporal
//! augmentations of cropped episodes, same/different-class pairs from a
//! labelled clip library, EESP-biased cropping and the episode memory.

mod augment;
mod batch;
mod crop;
mod memory;

pub use augment::{
    add_noise, make_negative, make_positive, Augmented, NegativeRule, PositiveRule, NOISE_VARIANCE,
};
pub use batch::{build_batch, BatchSpec, LabeledPair, Provenance};
pub use crop::{crop_window, eesp_crop_start, eesp_probabilities, sample_window_len, CropSpec};
pub use memory::{Episode, ExperienceMemory};

/// Frames closer than this are treated as identical.
pub const FRAME_TOL: f32 = 1e-6;
