use alloc::format;

use rand::Rng;

use super::clips::MotionClip;
use super::render::render;
use crate::frame::Frame;
use crate::math::{self, wrap_angle};
use crate::{Error, Result};

/// Number of actuated joints: torso, hip, knee.
pub const J: usize = 3;
/// Length of every link.
pub const LINK: f32 = 0.25;

/// Joint-space state plus the kinematic root (hip) and the clock phase.
///
/// `angles[0]` is the torso angle from vertical, `angles[1]` the thigh angle
/// from straight down and `angles[2]` the knee angle relative to the thigh.
/// The foot is pinned to the ground at `x = 0`, so the hip height follows
/// from the leg angles.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseState {
    pub angles: [f32; J],
    pub velocities: [f32; J],
    pub root: [f32; 2],
    pub root_vel: [f32; 2],
    pub phase: f32,
}

impl PoseState {
    pub fn from_joints(angles: [f32; J], velocities: [f32; J], phase: f32) -> Self {
        let angles = angles.map(wrap_angle);
        let (t1, t12) = (angles[1], angles[1] + angles[2]);
        let (s1, c1) = (math::sin(t1), math::cos(t1));
        let (s12, c12) = (math::sin(t12), math::cos(t12));
        let (w1, w12) = (velocities[1], velocities[1] + velocities[2]);
        // foot = root + LINK * (sin t1 + sin t12, -(cos t1 + cos t12)) = (0, 0)
        let root = [-LINK * (s1 + s12), LINK * (c1 + c12)];
        let root_vel = [-LINK * (c1 * w1 + c12 * w12), -LINK * (s1 * w1 + s12 * w12)];
        Self {
            angles,
            velocities,
            root,
            root_vel,
            phase,
        }
    }

    /// Standing straight, motionless, phase 0.
    pub fn rest() -> Self {
        Self::from_joints([0.0; J], [0.0; J], 0.0)
    }

    /// Link endpoints: `[head, hip, knee, foot]`.
    pub fn points(&self) -> [[f32; 2]; 4] {
        let [t0, t1, t2] = self.angles;
        let hip = self.root;
        let head = [hip[0] + LINK * math::sin(t0), hip[1] + LINK * math::cos(t0)];
        let knee = [hip[0] + LINK * math::sin(t1), hip[1] - LINK * math::cos(t1)];
        let foot = [
            knee[0] + LINK * math::sin(t1 + t2),
            knee[1] - LINK * math::cos(t1 + t2),
        ];
        [head, hip, knee, foot]
    }

    /// True when any endpoint other than the foot is below the ground.
    pub fn touches_ground(&self) -> bool {
        self.points()[..3].iter().any(|p| p[1] < 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.angles
            .iter()
            .chain(&self.velocities)
            .chain(&self.root)
            .chain(&self.root_vel)
            .all(|v| v.is_finite())
            && self.phase.is_finite()
    }
}

/// `exp(-2 * sum_j wrap(theta_j - theta_demo_j)^2)`.
pub fn oracle_reward(agent: &PoseState, demo: &PoseState) -> f64 {
    let err: f64 = (0..J)
        .map(|j| {
            let d = wrap_angle(agent.angles[j] - demo.angles[j]) as f64;
            d * d
        })
        .sum();
    math::exp64(-2.0 * err)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    /// Control steps per second.
    pub control_rate: f32,
    pub frame_h: usize,
    pub frame_w: usize,
    /// Episode cap in control steps.
    pub max_steps: usize,
    pub terminate_on_contact: bool,
    /// Reference state initialization.
    pub rsi: bool,
    /// Random playback speed per episode.
    pub warp: bool,
    pub speed_range: (f32, f32),
    pub kp: f32,
    pub kd: f32,
    pub substeps: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            control_rate: 30.0,
            frame_h: 32,
            frame_w: 32,
            max_steps: 60,
            terminate_on_contact: true,
            rsi: true,
            warp: false,
            speed_range: (0.5, 2.0),
            kp: 20.0,
            kd: 2.0,
            substeps: 4,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("env config: {m}")));
        if !(self.control_rate > 0.0) {
            return bad("control_rate must be positive");
        }
        if self.max_steps < 8 {
            return bad("max_steps must be at least 8");
        }
        if self.substeps == 0 || self.frame_h == 0 || self.frame_w == 0 {
            return bad("substeps and frame size must be positive");
        }
        if !(self.speed_range.0 > 0.0 && self.speed_range.0 <= self.speed_range.1) {
            return bad("speed_range must be positive and ordered");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub pose: PoseState,
    pub frame: Frame,
    pub demo_frame: Frame,
}

/// Evaluation-side information. None of it is meant for the learner.
#[derive(Clone, Debug, PartialEq)]
pub struct StepInfo {
    pub oracle_reward: f64,
    /// Ended by ground contact.
    pub terminated: bool,
    /// Ended by the step cap.
    pub truncated: bool,
    pub demo_phase: f32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub pose: PoseState,
    pub frame: Frame,
    pub demo_frame: Frame,
    pub done: bool,
    pub info: StepInfo,
}

/// One chain imitating one clip.
#[derive(Clone, Debug)]
pub struct ChainEnv {
    config: EnvConfig,
    base: MotionClip,
    clip: MotionClip,
    state: PoseState,
    phase0: f64,
    steps: usize,
    done: bool,
}

impl ChainEnv {
    pub fn new(config: EnvConfig, clip: MotionClip) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            clip: clip.clone(),
            base: clip,
            state: PoseState::rest(),
            phase0: 0.0,
            steps: 0,
            done: true,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// The clip as played this episode (speed included).
    pub fn clip(&self) -> &MotionClip {
        &self.clip
    }

    pub fn state(&self) -> &PoseState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Demonstration phase after `t` control steps.
    pub fn phase_at(&self, t: usize) -> f32 {
        let p = self.phase0
            + t as f64 * self.clip.phase_rate() as f64 / self.config.control_rate as f64;
        (p - math::floor64(p)) as f32
    }

    pub fn demo_pose(&self) -> PoseState {
        self.clip.pose(self.phase_at(self.steps))
    }

    pub fn render_agent(&self) -> Frame {
        render(&self.state, self.config.frame_h, self.config.frame_w)
    }

    pub fn render_demo(&self) -> Frame {
        render(&self.demo_pose(), self.config.frame_h, self.config.frame_w)
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        let speed = if self.config.warp {
            let (lo, hi) = self.config.speed_range;
            rng.random_range(lo..=hi)
        } else {
            self.base.speed
        };
        self.clip = self.base.with_speed(speed);
        self.phase0 = if self.config.rsi {
            rng.random::<f64>()
        } else {
            0.0
        };
        self.steps = 0;
        self.done = false;
        self.state = if self.config.rsi {
            self.clip.pose(self.phase0 as f32)
        } else {
            PoseState::rest()
        };
        self.state.phase = self.phase0 as f32;
        Observation {
            pose: self.state.clone(),
            frame: self.render_agent(),
            demo_frame: self.render_demo(),
        }
    }

    /// Applies PD targets `action` for one control step.
    pub fn step(&mut self, action: &[f32]) -> Result<StepOutcome> {
        if action.len() != J {
            return Err(Error::InvalidArgument(format!(
                "action has {} entries, expected {J}",
                action.len()
            )));
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteAction);
        }
        if action.iter().any(|a| a.abs() > core::f32::consts::PI) {
            return Err(Error::InvalidArgument("action outside [-pi, pi]".into()));
        }
        if self.done {
            return Err(Error::InvalidArgument(
                "step after episode end; call reset".into(),
            ));
        }
        let c = &self.config;
        let dt = 1.0 / (c.control_rate * c.substeps as f32);
        let mut th = self.state.angles;
        let mut w = self.state.velocities;
        for _ in 0..c.substeps {
            for j in 0..J {
                let acc = c.kp * (action[j] - th[j]) - c.kd * w[j];
                w[j] += acc * dt;
                th[j] += w[j] * dt;
            }
        }
        self.steps += 1;
        let phase = self.phase_at(self.steps);
        self.state = PoseState::from_joints(th, w, phase);
        let demo = self.clip.pose(phase);
        let terminated = c.terminate_on_contact && self.state.touches_ground();
        let truncated = self.steps >= c.max_steps;
        self.done = terminated || truncated;
        Ok(StepOutcome {
            frame: self.render_agent(),
            demo_frame: render(&demo, c.frame_h, c.frame_w),
            done: self.done,
            info: StepInfo {
                oracle_reward: oracle_reward(&self.state, &demo),
                terminated,
                truncated: truncated && !terminated,
                demo_phase: phase,
            },
            pose: self.state.clone(),
        })
    }
}
