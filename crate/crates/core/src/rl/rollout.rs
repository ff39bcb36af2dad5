use alloc::vec::Vec;

use rand::Rng;

use super::policy::{observe, GaussianPolicy};
use crate::autodiff::ParameterStore;
use crate::env::ChainEnv;
use crate::frame::{Frame, MotionSequence};
use crate::pairs::Episode;
use crate::{Error, Result};

/// One episode as seen by the learner.
///
/// `agent_frames` and `demo_frames` hold `len() + 1` frames: the reset
/// frame followed by one frame per step. `rewards` stays empty until the
/// caller scores the episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f32>>,
    pub actions: Vec<Vec<f32>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub agent_frames: Vec<Frame>,
    pub demo_frames: Vec<Frame>,
    /// Observation after the last step, for bootstrapping.
    pub final_state: Vec<f32>,
    /// Ended by ground contact rather than the step cap.
    pub terminated: bool,
    pub class_id: usize,
    pub speed: f32,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn set_rewards(&mut self, rewards: Vec<f64>) -> Result<()> {
        if rewards.len() != self.len() {
            return Err(Error::LengthMismatch(rewards.len(), self.len()));
        }
        self.rewards = rewards;
        Ok(())
    }

    pub fn agent_sequence(&self) -> MotionSequence {
        MotionSequence::new(self.agent_frames.clone(), self.class_id, self.speed)
    }

    pub fn demo_sequence(&self) -> MotionSequence {
        MotionSequence::new(self.demo_frames.clone(), self.class_id, self.speed)
    }

    pub fn episode(&self) -> Result<Episode> {
        Episode::new(self.agent_sequence(), self.demo_sequence(), self.class_id)
    }
}

/// Evaluation-only record kept apart from [`Trajectory`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalTrace {
    pub oracle_rewards: Vec<f64>,
}

impl EvalTrace {
    pub fn oracle_return(&self) -> f64 {
        self.oracle_rewards.iter().sum()
    }
}

/// Runs one episode. With `deterministic` the policy mean is executed.
pub fn rollout_episode<R: Rng + ?Sized>(
    env: &mut ChainEnv,
    policy: &GaussianPolicy,
    store: &ParameterStore,
    deterministic: bool,
    rng: &mut R,
) -> Result<(Trajectory, EvalTrace)> {
    let obs = env.reset(rng);
    let mut traj = Trajectory {
        states: Vec::new(),
        actions: Vec::new(),
        log_probs: Vec::new(),
        rewards: Vec::new(),
        dones: Vec::new(),
        agent_frames: alloc::vec![obs.frame],
        demo_frames: alloc::vec![obs.demo_frame],
        final_state: Vec::new(),
        terminated: false,
        class_id: env.clip().class_id,
        speed: env.clip().speed,
    };
    let mut trace = EvalTrace::default();
    let mut state = observe(&obs.pose);
    loop {
        let (action, lp) = if deterministic {
            let mu = policy.means(store, &[state.clone()])?.remove(0);
            let lp = policy.log_prob(store, &mu, &mu);
            (mu, lp)
        } else {
            policy.sample_action(store, &state, rng)?
        };
        let pi = core::f32::consts::PI;
        let target: Vec<f32> = action.iter().map(|a| a.clamp(-pi, pi)).collect();
        let out = env.step(&target)?;
        traj.states
            .push(core::mem::replace(&mut state, observe(&out.pose)));
        traj.actions.push(action);
        traj.log_probs.push(lp);
        traj.dones.push(out.done);
        traj.agent_frames.push(out.frame);
        traj.demo_frames.push(out.demo_frame);
        trace.oracle_rewards.push(out.info.oracle_reward);
        if out.done {
            traj.terminated = out.info.terminated;
            break;
        }
    }
    traj.final_state = state;
    Ok((traj, trace))
}

/// Collects whole episodes until at least `min_samples` steps are gathered.
pub fn collect<R: Rng + ?Sized>(
    env: &mut ChainEnv,
    policy: &GaussianPolicy,
    store: &ParameterStore,
    min_samples: usize,
    rng: &mut R,
) -> Result<Vec<(Trajectory, EvalTrace)>> {
    let mut out = Vec::new();
    let mut steps = 0;
    while steps < min_samples.max(1) {
        let ep = rollout_episode(env, policy, store, false, rng)?;
        steps += ep.0.len();
        out.push(ep);
    }
    Ok(out)
}
