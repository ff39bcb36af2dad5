use alloc::vec::Vec;
use core::f64::consts::PI;

use super::chain::{PoseState, J};
use super::render::render;
use crate::frame::MotionSequence;
use crate::math;

/// Shape family of a demonstration clip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClipKind {
    /// Alternating hip swing with knee flexion during the swing phase.
    Walk,
    /// Walk-like at twice the frequency with larger amplitudes.
    Run,
    /// A slow crouch over most of the cycle, then a quick extension.
    Jump,
    /// Forward lean with a sawtooth-like sway and a stiff knee.
    Zombie,
    /// A walk with a fixed backward torso offset, for libraries beyond the
    /// four named classes.
    Leaning(f32),
}

/// Periodic joint-angle trajectory of one motion class.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionClip {
    pub class_id: usize,
    pub kind: ClipKind,
    /// Seconds per cycle at `speed == 1`.
    pub cycle_duration: f32,
    /// Playback speed modifier.
    pub speed: f32,
}

fn raised(x: f64) -> f64 {
    0.5 - 0.5 * math::cos64(x)
}

/// Share of the jump cycle spent crouching.
const CROUCH: f64 = 0.7;

/// Maps `[0,1)` so the first `CROUCH` of the cycle covers the first half of
/// the pulse. Played backwards the motion is a fast crouch, which no phase
/// shift of the clip reproduces.
fn crouch_phase(p: f64) -> f64 {
    if p < CROUCH {
        0.5 * p / CROUCH
    } else {
        0.5 + 0.5 * (p - CROUCH) / (1.0 - CROUCH)
    }
}

impl MotionClip {
    pub fn new(class_id: usize, kind: ClipKind) -> Self {
        Self {
            class_id,
            kind,
            cycle_duration: 1.0,
            speed: 1.0,
        }
    }

    pub fn with_speed(&self, speed: f32) -> Self {
        Self {
            speed,
            ..self.clone()
        }
    }

    /// Joint angles at phase `phase` (any real; period 1).
    pub fn angles64(&self, phase: f64) -> [f64; J] {
        let w = 2.0 * PI * phase;
        let s = math::sin64;
        match self.kind {
            ClipKind::Walk => [0.3 + 0.1 * s(w), 0.8 * s(w), -1.0 * raised(w + 0.5)],
            ClipKind::Run => [
                0.6 + 0.1 * s(2.0 * w),
                1.1 * s(2.0 * w),
                -1.4 * raised(2.0 * w + 1.2),
            ],
            ClipKind::Jump => {
                let c = raised(2.0 * PI * crouch_phase(phase - math::floor64(phase)));
                [0.7 * c, 1.0 * c, -2.0 * c]
            }
            ClipKind::Zombie => [
                1.0 + 0.2 * s(w) + 0.1 * s(2.0 * w),
                0.4 * s(w + PI / 3.0) + 0.2 * s(2.0 * w),
                -0.15,
            ],
            ClipKind::Leaning(off) => [off as f64 + 0.1 * s(w), 0.6 * s(w), -0.8 * raised(w + 0.5)],
        }
    }

    pub fn angles(&self, phase: f32) -> [f32; J] {
        self.angles64(phase as f64).map(|a| a as f32)
    }

    /// Phase advance per second.
    pub fn phase_rate(&self) -> f32 {
        self.speed / self.cycle_duration
    }

    /// Joint angular velocities at `phase`, in rad/s.
    pub fn velocities(&self, phase: f32) -> [f32; J] {
        let h = 1e-4;
        let a = self.angles64(phase as f64 + h);
        let b = self.angles64(phase as f64 - h);
        let rate = self.phase_rate() as f64;
        core::array::from_fn(|j| ((a[j] - b[j]) / (2.0 * h) * rate) as f32)
    }

    /// The demonstrated pose at `phase`, with the kinematic root.
    pub fn pose(&self, phase: f32) -> PoseState {
        PoseState::from_joints(self.angles(phase), self.velocities(phase), phase)
    }

    /// `len` frames sampled at `control_rate` starting from `phase0`.
    pub fn render_sequence(
        &self,
        phase0: f64,
        len: usize,
        control_rate: f32,
        h: usize,
        w: usize,
    ) -> MotionSequence {
        let step = self.phase_rate() as f64 / control_rate as f64;
        let frames = (0..len)
            .map(|t| {
                let p = phase0 + t as f64 * step;
                render(&self.pose((p - math::floor64(p)) as f32), h, w)
            })
            .collect();
        MotionSequence::new(frames, self.class_id, self.speed)
    }
}

/// `k` distinct motion classes with ids `0..k`: walk, run, jump and zombie,
/// then leaning walks with increasing backward torso offsets.
pub fn motion_library(k: usize) -> Vec<MotionClip> {
    (0..k)
        .map(|i| {
            let kind = match i {
                0 => ClipKind::Walk,
                1 => ClipKind::Run,
                2 => ClipKind::Jump,
                3 => ClipKind::Zombie,
                n => ClipKind::Leaning(-0.4 * (n - 3) as f32),
            };
            MotionClip::new(i, kind)
        })
        .collect()
}

/// Mean over a phase grid of the Euclidean joint-angle distance.
pub fn class_separation(a: &MotionClip, b: &MotionClip, grid: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..grid {
        let p = i as f64 / grid as f64;
        let (x, y) = (a.angles64(p), b.angles64(p));
        total += math::sqrt64((0..J).map(|j| (x[j] - y[j]) * (x[j] - y[j])).sum());
    }
    total / grid as f64
}
