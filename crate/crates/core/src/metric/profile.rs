use alloc::vec::Vec;

use crate::nn::Encoded;
use crate::{math, Error, Result};

/// Which distance terms feed the reward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DistanceMode {
    /// Per-frame embeddings only.
    Spatial,
    /// Recurrent encodings only.
    Temporal,
    /// Sum of both.
    Combined,
}

/// Distance to reward mapping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardKind {
    /// `exp(w_d * d^2)`
    Normalized,
    /// `-d`
    NegDist,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceProfile {
    pub d_e: Vec<f64>,
    pub d_h: Vec<f64>,
    pub d: Vec<f64>,
}

impl DistanceProfile {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn select(&self, mode: DistanceMode) -> &[f64] {
        match mode {
            DistanceMode::Spatial => &self.d_e,
            DistanceMode::Temporal => &self.d_h,
            DistanceMode::Combined => &self.d,
        }
    }
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    math::sqrt64(
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y) as f64;
                d * d
            })
            .sum(),
    )
}

/// Per-step distances between two encoded sequences of equal length.
pub fn distance_profile(a: &Encoded, b: &Encoded) -> Result<DistanceProfile> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    let d_e: Vec<f64> = a.e.iter().zip(&b.e).map(|(x, y)| dist(x, y)).collect();
    let d_h: Vec<f64> = a.h.iter().zip(&b.h).map(|(x, y)| dist(x, y)).collect();
    let d = d_e.iter().zip(&d_h).map(|(x, y)| x + y).collect();
    Ok(DistanceProfile { d_e, d_h, d })
}

/// `exp(w_d * d^2)`, in `(0, 1]` for `w_d < 0`.
pub fn shaped_reward(d: f64, w_d: f64) -> f64 {
    math::exp64(w_d * d * d)
}

pub fn reward_from_distance(d: f64, kind: RewardKind, w_d: f64) -> f64 {
    match kind {
        RewardKind::Normalized => shaped_reward(d, w_d),
        RewardKind::NegDist => -d,
    }
}
