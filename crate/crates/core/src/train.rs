//! The interleaved loop: collect rollouts with a frozen metric, score them,
//! train the metric on memory and library pairs, then update the policy and
//! value function. No IO happens here.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Adam, ParameterStore};
use crate::env::{motion_library, ChainEnv, EnvConfig, MotionClip};
use crate::frame::MotionSequence;
use crate::metric::{
    distance_profile, metric_train_step, reward_from_distance, DistanceMode, LossReport,
    MetricLossWeights, RewardKind,
};
use crate::nn::{MetricArch, MetricNet, METRIC_PREFIX};
use crate::pairs::{build_batch, BatchSpec, Episode, ExperienceMemory};
use crate::rl::{
    collect, policy_update, rollout_episode, value_update, EvalTrace, GaussianPolicy, MlpConfig,
    PolicyBatch, Trajectory, UpdateConfig, ValueFunction, OBS_DIM,
};
use crate::rng::{derive, stream, StreamRng};
use crate::{math, Error, Result};

/// Where policy rewards come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RewardSource {
    /// The learned distance (the normal mode).
    Metric,
    /// The hidden pose reward. Diagnostic only.
    Oracle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub env: EnvConfig,
    /// Class id of the imitated clip within the library.
    pub clip_class: usize,
    pub library_size: usize,
    /// Library sequences per class for metric pairs.
    pub library_per_class: usize,
    /// Frames per library sequence.
    pub library_len: usize,
    pub policy_net: MlpConfig,
    pub value_net: MlpConfig,
    pub init_std: f32,
    pub update: UpdateConfig,
    pub samples_per_round: usize,
    pub value_lr: f32,
    pub value_steps: usize,
    pub loss: MetricLossWeights,
    pub metric_lr: f32,
    pub metric_steps: usize,
    pub batch: BatchSpec,
    pub memory_capacity: usize,
    pub dropout: bool,
    pub mode: DistanceMode,
    pub reward_kind: RewardKind,
    pub reward_source: RewardSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env: EnvConfig::default(),
            clip_class: 0,
            library_size: 4,
            library_per_class: 8,
            library_len: 24,
            policy_net: MlpConfig::default(),
            value_net: MlpConfig::default(),
            init_std: 0.2,
            update: UpdateConfig::default(),
            samples_per_round: 2048,
            value_lr: 1e-3,
            value_steps: 20,
            loss: MetricLossWeights::default(),
            metric_lr: 1e-4,
            metric_steps: 20,
            batch: BatchSpec::default(),
            memory_capacity: ExperienceMemory::DEFAULT_CAPACITY,
            dropout: true,
            mode: DistanceMode::Combined,
            reward_kind: RewardKind::Normalized,
            reward_source: RewardSource::Metric,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.update.validate()?;
        self.loss.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.library_size < 2 {
            return bad("library_size must be at least 2");
        }
        if self.clip_class >= self.library_size {
            return bad("clip_class must be below library_size");
        }
        if self.library_per_class == 0 || self.library_len < self.batch.crop.min_len.max(2) {
            return bad("library sequences must exist and be at least the minimum crop length");
        }
        if self.samples_per_round == 0 || self.memory_capacity == 0 || self.batch.pairs == 0 {
            return bad("samples, memory capacity and batch pairs must be positive");
        }
        if !(self.init_std > 0.0) || !(self.value_lr >= 0.0) || !(self.metric_lr >= 0.0) {
            return bad("init_std must be positive and learning rates non-negative");
        }
        Ok(())
    }

    pub fn arch(&self) -> MetricArch {
        MetricArch::with_frame(self.env.frame_h, self.env.frame_w)
    }
}

/// Per-round averages.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundStats {
    pub round: usize,
    pub env_steps: usize,
    /// Mean per-step reward fed to the learner.
    pub mean_reward: f64,
    pub mean_oracle_return: f64,
    pub mean_episode_len: f64,
    pub triplet: f64,
    pub vae: f64,
    pub seq_ae: f64,
    pub policy_kl: f64,
    pub policy_accepted: bool,
    pub value_mse: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
}

impl EvalSummary {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }

    pub fn std(&self) -> f64 {
        let m = self.mean();
        let n = self.returns.len().max(1) as f64;
        math::sqrt64(self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n)
    }
}

/// One rendering of `clip` from a random phase and, when the config warps,
/// a random speed.
pub fn render_random<R: Rng + ?Sized>(
    clip: &MotionClip,
    len: usize,
    env: &EnvConfig,
    rng: &mut R,
) -> MotionSequence {
    let speed = if env.warp {
        rng.random_range(env.speed_range.0..=env.speed_range.1)
    } else {
        clip.speed
    };
    let phase0 = rng.random::<f64>();
    clip.with_speed(speed)
        .render_sequence(phase0, len, env.control_rate, env.frame_h, env.frame_w)
}

/// `per_class` random renderings of every clip.
pub fn render_library<R: Rng + ?Sized>(
    clips: &[MotionClip],
    per_class: usize,
    len: usize,
    env: &EnvConfig,
    rng: &mut R,
) -> Vec<MotionSequence> {
    (0..per_class * clips.len())
        .map(|i| render_random(&clips[i % clips.len()], len, env, rng))
        .collect()
}

/// Per-step learner rewards from the learned distance between the agent and
/// demonstration frames after each step.
pub fn metric_rewards(
    net: &MetricNet,
    store: &ParameterStore,
    traj: &Trajectory,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let agent = traj.agent_sequence();
    let demo = traj.demo_sequence();
    let enc = net.encode(store, &[&agent, &demo])?;
    let prof = distance_profile(&enc[0], &enc[1])?;
    let d = prof.select(cfg.mode);
    Ok(d[1..]
        .iter()
        .map(|&x| reward_from_distance(x, cfg.reward_kind, cfg.loss.w_d))
        .collect())
}

pub struct Trainer {
    pub config: TrainConfig,
    pub store: ParameterStore,
    pub net: MetricNet,
    pub policy: GaussianPolicy,
    pub value: ValueFunction,
    pub library: Vec<MotionSequence>,
    pub memory: ExperienceMemory,
    clips: Vec<MotionClip>,
    env: ChainEnv,
    metric_adam: Adam,
    value_adam: Adam,
    rollout_rng: StreamRng,
    pairs_rng: StreamRng,
    metric_rng: StreamRng,
    round: usize,
    env_steps: usize,
}

impl Trainer {
    /// Parameters are registered metric first, then policy, then value, all
    /// from the init stream of `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init = derive(config.seed, stream::INIT);
        let mut store = ParameterStore::new();
        let net = MetricNet::register(&mut store, &config.arch(), &mut init)?;
        let policy = GaussianPolicy::register(
            &mut store,
            OBS_DIM,
            crate::env::J,
            &config.policy_net,
            config.init_std,
            &mut init,
        )?;
        let value = ValueFunction::register(&mut store, OBS_DIM, &config.value_net, &mut init)?;
        let clips = motion_library(config.library_size);
        let mut lib_rng = derive(config.seed, stream::LIBRARY);
        let library = render_library(
            &clips,
            config.library_per_class,
            config.library_len,
            &config.env,
            &mut lib_rng,
        );
        let env = ChainEnv::new(config.env.clone(), clips[config.clip_class].clone())?;
        let metric_adam = Adam::new(
            &store,
            store.ids_with_prefix(METRIC_PREFIX),
            config.metric_lr,
        );
        let value_adam = Adam::new(&store, value.ids(), config.value_lr);
        Ok(Self {
            memory: ExperienceMemory::new(config.memory_capacity),
            rollout_rng: derive(config.seed, stream::ENV),
            pairs_rng: derive(config.seed, stream::PAIRS),
            metric_rng: derive(config.seed, stream::METRIC),
            config,
            store,
            net,
            policy,
            value,
            library,
            clips,
            env,
            metric_adam,
            value_adam,
            round: 0,
            env_steps: 0,
        })
    }

    pub fn rounds_done(&self) -> usize {
        self.round
    }

    pub fn clips(&self) -> &[MotionClip] {
        &self.clips
    }

    /// Overwrites every metric parameter with the one of the same name in
    /// `other`.
    pub fn load_metric(&mut self, other: &ParameterStore) -> Result<usize> {
        let n = self.store.copy_values_from(other, METRIC_PREFIX)?;
        self.metric_adam = Adam::new(
            &self.store,
            self.store.ids_with_prefix(METRIC_PREFIX),
            self.config.metric_lr,
        );
        Ok(n)
    }

    fn metric_step(&mut self, memory: &ExperienceMemory) -> Result<LossReport> {
        let batch = build_batch(
            memory,
            &self.library,
            &self.config.batch,
            &mut self.pairs_rng,
        )?;
        metric_train_step(
            &self.net,
            &mut self.store,
            &mut self.metric_adam,
            &batch,
            &self.config.loss,
            &mut self.metric_rng,
            self.config.dropout,
        )
    }

    /// One metric step on library class pairs and augmentations of
    /// demonstration-only pseudo-episodes.
    pub fn pretrain_step(&mut self, demos: &ExperienceMemory) -> Result<LossReport> {
        self.metric_step(demos)
    }

    /// Pseudo-episodes pairing two renderings of the same clip, cycling
    /// through the classes.
    pub fn demo_memory(&self, episodes: usize, len: usize) -> Result<ExperienceMemory> {
        let mut rng = derive(self.config.seed, stream::DEMOS);
        let mut mem = ExperienceMemory::new(episodes.max(1));
        for i in 0..episodes {
            let clip = &self.clips[i % self.clips.len()];
            let agent = render_random(clip, len, &self.config.env, &mut rng);
            let demo = render_random(clip, len, &self.config.env, &mut rng);
            mem.push(Episode::new(agent, demo, clip.class_id)?);
        }
        Ok(mem)
    }

    /// One iteration of the outer loop.
    pub fn round(&mut self) -> Result<RoundStats> {
        let eps = collect(
            &mut self.env,
            &self.policy,
            &self.store,
            self.config.samples_per_round,
            &mut self.rollout_rng,
        )?;
        let (mut trajs, traces): (Vec<Trajectory>, Vec<EvalTrace>) = eps.into_iter().unzip();

        // Scoring uses the metric as it stood during collection.
        for (t, trace) in trajs.iter_mut().zip(&traces) {
            let r = match self.config.reward_source {
                RewardSource::Metric => metric_rewards(&self.net, &self.store, t, &self.config)?,
                RewardSource::Oracle => trace.oracle_rewards.clone(),
            };
            t.set_rewards(r)?;
        }
        let steps: usize = trajs.iter().map(|t| t.len()).sum();
        self.env_steps += steps;
        let mut stats = RoundStats {
            round: self.round + 1,
            env_steps: self.env_steps,
            mean_reward: trajs.iter().flat_map(|t| &t.rewards).sum::<f64>() / steps as f64,
            mean_oracle_return: traces.iter().map(|t| t.oracle_return()).sum::<f64>()
                / traces.len() as f64,
            mean_episode_len: steps as f64 / trajs.len() as f64,
            ..RoundStats::default()
        };

        if self.config.reward_source == RewardSource::Metric {
            for t in &trajs {
                self.memory.push(t.episode()?);
            }
            let memory = core::mem::replace(&mut self.memory, ExperienceMemory::new(1));
            let mut sums = [0.0; 3];
            let n = self.config.metric_steps;
            let result = (|| {
                for _ in 0..n {
                    let r = self.metric_step(&memory)?;
                    sums[0] += r.triplet;
                    sums[1] += r.vae;
                    sums[2] += r.seq_ae;
                }
                Ok::<(), Error>(())
            })();
            self.memory = memory;
            result?;
            let k = n.max(1) as f64;
            stats.triplet = sums[0] / k;
            stats.vae = sums[1] / k;
            stats.seq_ae = sums[2] / k;
        }

        let refs: Vec<&Trajectory> = trajs.iter().collect();
        let batch =
            PolicyBatch::from_trajectories(&refs, &self.value, &self.store, &self.config.update)?;
        let rep = policy_update(&self.policy, &mut self.store, &batch, &self.config.update)?;
        if rep.accepted && rep.kl > self.config.update.delta_kl {
            return Err(Error::InvalidArgument(
                "accepted policy step exceeds the KL budget".into(),
            ));
        }
        stats.policy_kl = if rep.accepted { rep.kl } else { 0.0 };
        stats.policy_accepted = rep.accepted;
        for _ in 0..self.config.value_steps {
            stats.value_mse = value_update(
                &self.value,
                &mut self.store,
                &mut self.value_adam,
                &batch,
                self.config.value_lr,
            )?;
        }
        self.round += 1;
        Ok(stats)
    }

    /// Oracle returns of `episodes` sampled-policy episodes on a fresh copy of
    /// the environment.
    pub fn evaluate(&self, episodes: usize, seed: u64) -> Result<EvalSummary> {
        evaluate(
            &self.config,
            &self.clips[self.config.clip_class],
            &self.policy,
            &self.store,
            episodes,
            seed,
        )
    }
}

pub fn evaluate(
    config: &TrainConfig,
    clip: &MotionClip,
    policy: &GaussianPolicy,
    store: &ParameterStore,
    episodes: usize,
    seed: u64,
) -> Result<EvalSummary> {
    let mut env = ChainEnv::new(config.env.clone(), clip.clone())?;
    let mut rng = derive(seed, stream::EVAL);
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let (_, trace) = rollout_episode(&mut env, policy, store, false, &mut rng)?;
        returns.push(trace.oracle_return());
    }
    Ok(EvalSummary { returns })
}
