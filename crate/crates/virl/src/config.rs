//! Flat `key = value` run configuration.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Every
//! key is listed in [`KEYS`]; anything else is rejected so typos surface.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use virl_core::metric::{DistanceMode, RewardKind};
use virl_core::rl::MlpConfig;
use virl_core::train::{RewardSource, TrainConfig};

use crate::{Error, Result};

/// `(key, description)` in serialization order.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed; every random stream derives from it"),
    ("rounds", "outer-loop rounds for train"),
    (
        "clip",
        "imitated clip: walk, run, jump, zombie or a class id",
    ),
    ("library_size", "number of motion classes"),
    (
        "library_per_class",
        "library sequences per class used for class pairs",
    ),
    ("library_len", "frames per library sequence"),
    ("frame_size", "square frame side in pixels (16, 32 or 64)"),
    ("control_rate", "control steps per second"),
    ("max_steps", "episode cap in control steps"),
    (
        "terminate_on_contact",
        "end episodes when a non-foot point goes below ground (on/off)",
    ),
    ("rsi", "reference state initialization (on/off)"),
    ("warp", "random demonstration speed per episode (on/off)"),
    ("speed_min", "lower warp speed"),
    ("speed_max", "upper warp speed"),
    ("kp", "PD position gain"),
    ("kd", "PD velocity gain"),
    ("substeps", "physics substeps per control step"),
    ("policy_hidden", "comma-separated policy hidden sizes"),
    ("value_hidden", "comma-separated value hidden sizes"),
    ("init_std", "fixed policy action standard deviation"),
    ("delta_kl", "KL budget per policy update"),
    ("max_tries", "line-search tries per policy update"),
    ("gamma", "discount"),
    ("lambda", "GAE lambda"),
    ("samples_per_round", "environment steps collected per round"),
    ("value_lr", "value function Adam learning rate"),
    ("value_steps", "value updates per round"),
    ("metric_lr", "metric Adam learning rate"),
    ("metric_steps", "metric updates per round"),
    ("pairs", "pairs per metric batch"),
    (
        "aug_fraction",
        "share of batch anchors taken from memory episodes",
    ),
    ("crop_min", "shortest crop window"),
    ("crop_max", "longest crop window, 0 for no cap"),
    ("memory_capacity", "episodes kept in experience memory"),
    ("dropout", "dropout during metric training (on/off)"),
    ("w_triplet", "triplet loss weight"),
    ("w_vae", "VAE loss weight"),
    ("beta", "KL weight inside the VAE loss"),
    ("w_seq_ae", "sequence autoencoder loss weight"),
    ("margin", "negative-pair hinge margin"),
    ("w_d", "reward width in exp(w_d * d^2), negative"),
    (
        "mode",
        "distance used for rewards: spatial, temporal or combined",
    ),
    ("reward", "normalized or negdist"),
    ("reward_source", "metric, or oracle for the diagnostic run"),
    (
        "checkpoint_every",
        "rounds between periodic checkpoints, 0 for none",
    ),
    ("eval_episodes", "episodes per evaluation"),
    (
        "pretrained",
        "metric checkpoint loaded before train, empty for none",
    ),
    ("pretrain_steps", "metric steps for pretrain-metric"),
    (
        "pretrain_episodes",
        "demonstration pseudo-episodes for pretraining",
    ),
    (
        "heldout_per_class",
        "held-out sequences per class for separation checks",
    ),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub rounds: usize,
    pub checkpoint_every: usize,
    pub eval_episodes: usize,
    pub pretrained: Option<PathBuf>,
    pub pretrain_steps: usize,
    pub pretrain_episodes: usize,
    pub heldout_per_class: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            rounds: 100,
            checkpoint_every: 0,
            eval_episodes: 10,
            pretrained: None,
            pretrain_steps: 2000,
            pretrain_episodes: 64,
            heldout_per_class: 25,
        }
    }
}

const CLIPS: [&str; 4] = ["walk", "run", "jump", "zombie"];

fn on_off(v: bool) -> String {
    if v { "on" } else { "off" }.to_string()
}

fn list(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn mode_name(m: DistanceMode) -> &'static str {
    match m {
        DistanceMode::Spatial => "spatial",
        DistanceMode::Temporal => "temporal",
        DistanceMode::Combined => "combined",
    }
}

pub fn parse_mode(s: &str) -> Option<DistanceMode> {
    match s {
        "spatial" => Some(DistanceMode::Spatial),
        "temporal" => Some(DistanceMode::Temporal),
        "combined" => Some(DistanceMode::Combined),
        _ => None,
    }
}

pub fn parse_reward(s: &str) -> Option<RewardKind> {
    match s {
        "normalized" => Some(RewardKind::Normalized),
        "negdist" => Some(RewardKind::NegDist),
        _ => None,
    }
}

pub fn parse_switch(s: &str) -> Option<bool> {
    match s {
        "on" | "true" | "1" => Some(true),
        "off" | "false" | "0" => Some(false),
        _ => None,
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn sizes(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|x| num(key, x.trim())).collect()
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        Some(match key {
            "seed" => t.seed.to_string(),
            "rounds" => self.rounds.to_string(),
            "clip" => CLIPS
                .get(t.clip_class)
                .map_or_else(|| t.clip_class.to_string(), |s| s.to_string()),
            "library_size" => t.library_size.to_string(),
            "library_per_class" => t.library_per_class.to_string(),
            "library_len" => t.library_len.to_string(),
            "frame_size" => t.env.frame_h.to_string(),
            "control_rate" => t.env.control_rate.to_string(),
            "max_steps" => t.env.max_steps.to_string(),
            "terminate_on_contact" => on_off(t.env.terminate_on_contact),
            "rsi" => on_off(t.env.rsi),
            "warp" => on_off(t.env.warp),
            "speed_min" => t.env.speed_range.0.to_string(),
            "speed_max" => t.env.speed_range.1.to_string(),
            "kp" => t.env.kp.to_string(),
            "kd" => t.env.kd.to_string(),
            "substeps" => t.env.substeps.to_string(),
            "policy_hidden" => list(&t.policy_net.hidden),
            "value_hidden" => list(&t.value_net.hidden),
            "init_std" => t.init_std.to_string(),
            "delta_kl" => t.update.delta_kl.to_string(),
            "max_tries" => t.update.max_tries.to_string(),
            "gamma" => t.update.gamma.to_string(),
            "lambda" => t.update.lambda.to_string(),
            "samples_per_round" => t.samples_per_round.to_string(),
            "value_lr" => t.value_lr.to_string(),
            "value_steps" => t.value_steps.to_string(),
            "metric_lr" => t.metric_lr.to_string(),
            "metric_steps" => t.metric_steps.to_string(),
            "pairs" => t.batch.pairs.to_string(),
            "aug_fraction" => t.batch.aug_fraction.to_string(),
            "crop_min" => t.batch.crop.min_len.to_string(),
            "crop_max" => t.batch.crop.max_len.unwrap_or(0).to_string(),
            "memory_capacity" => t.memory_capacity.to_string(),
            "dropout" => on_off(t.dropout),
            "w_triplet" => t.loss.w_triplet.to_string(),
            "w_vae" => t.loss.w_vae.to_string(),
            "beta" => t.loss.beta.to_string(),
            "w_seq_ae" => t.loss.w_seq_ae.to_string(),
            "margin" => t.loss.margin.to_string(),
            "w_d" => t.loss.w_d.to_string(),
            "mode" => mode_name(t.mode).to_string(),
            "reward" => match t.reward_kind {
                RewardKind::Normalized => "normalized",
                RewardKind::NegDist => "negdist",
            }
            .to_string(),
            "reward_source" => match t.reward_source {
                RewardSource::Metric => "metric",
                RewardSource::Oracle => "oracle",
            }
            .to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "pretrained" => self
                .pretrained
                .as_ref()
                .map_or_else(String::new, |p| p.display().to_string()),
            "pretrain_steps" => self.pretrain_steps.to_string(),
            "pretrain_episodes" => self.pretrain_episodes.to_string(),
            "heldout_per_class" => self.heldout_per_class.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        let bad = || Error::Config(format!("{key}: invalid value {v:?}"));
        match key {
            "seed" => t.seed = num(key, v)?,
            "rounds" => self.rounds = num(key, v)?,
            "clip" => {
                t.clip_class = match CLIPS.iter().position(|&c| c == v) {
                    Some(i) => i,
                    None => num(key, v)?,
                }
            }
            "library_size" => t.library_size = num(key, v)?,
            "library_per_class" => t.library_per_class = num(key, v)?,
            "library_len" => t.library_len = num(key, v)?,
            "frame_size" => {
                let n: usize = num(key, v)?;
                t.env.frame_h = n;
                t.env.frame_w = n;
            }
            "control_rate" => t.env.control_rate = num(key, v)?,
            "max_steps" => t.env.max_steps = num(key, v)?,
            "terminate_on_contact" => {
                t.env.terminate_on_contact = parse_switch(v).ok_or_else(bad)?
            }
            "rsi" => t.env.rsi = parse_switch(v).ok_or_else(bad)?,
            "warp" => t.env.warp = parse_switch(v).ok_or_else(bad)?,
            "speed_min" => t.env.speed_range.0 = num(key, v)?,
            "speed_max" => t.env.speed_range.1 = num(key, v)?,
            "kp" => t.env.kp = num(key, v)?,
            "kd" => t.env.kd = num(key, v)?,
            "substeps" => t.env.substeps = num(key, v)?,
            "policy_hidden" => {
                t.policy_net = MlpConfig {
                    hidden: sizes(key, v)?,
                    ..t.policy_net.clone()
                }
            }
            "value_hidden" => {
                t.value_net = MlpConfig {
                    hidden: sizes(key, v)?,
                    ..t.value_net.clone()
                }
            }
            "init_std" => t.init_std = num(key, v)?,
            "delta_kl" => t.update.delta_kl = num(key, v)?,
            "max_tries" => t.update.max_tries = num(key, v)?,
            "gamma" => t.update.gamma = num(key, v)?,
            "lambda" => t.update.lambda = num(key, v)?,
            "samples_per_round" => t.samples_per_round = num(key, v)?,
            "value_lr" => t.value_lr = num(key, v)?,
            "value_steps" => t.value_steps = num(key, v)?,
            "metric_lr" => t.metric_lr = num(key, v)?,
            "metric_steps" => t.metric_steps = num(key, v)?,
            "pairs" => t.batch.pairs = num(key, v)?,
            "aug_fraction" => t.batch.aug_fraction = num(key, v)?,
            "crop_min" => t.batch.crop.min_len = num(key, v)?,
            "crop_max" => {
                let n: usize = num(key, v)?;
                t.batch.crop.max_len = (n > 0).then_some(n);
            }
            "memory_capacity" => t.memory_capacity = num(key, v)?,
            "dropout" => t.dropout = parse_switch(v).ok_or_else(bad)?,
            "w_triplet" => t.loss.w_triplet = num(key, v)?,
            "w_vae" => t.loss.w_vae = num(key, v)?,
            "beta" => t.loss.beta = num(key, v)?,
            "w_seq_ae" => t.loss.w_seq_ae = num(key, v)?,
            "margin" => t.loss.margin = num(key, v)?,
            "w_d" => t.loss.w_d = num(key, v)?,
            "mode" => t.mode = parse_mode(v).ok_or_else(bad)?,
            "reward" => t.reward_kind = parse_reward(v).ok_or_else(bad)?,
            "reward_source" => {
                t.reward_source = match v {
                    "metric" => RewardSource::Metric,
                    "oracle" => RewardSource::Oracle,
                    _ => return Err(bad()),
                }
            }
            "checkpoint_every" => self.checkpoint_every = num(key, v)?,
            "eval_episodes" => self.eval_episodes = num(key, v)?,
            "pretrained" => self.pretrained = (!v.is_empty()).then(|| PathBuf::from(v)),
            "pretrain_steps" => self.pretrain_steps = num(key, v)?,
            "pretrain_episodes" => self.pretrain_episodes = num(key, v)?,
            "heldout_per_class" => self.heldout_per_class = num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        Ok(())
    }

    /// Every key in [`KEYS`] order. Parsing the output gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _) in KEYS {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&self.get(k).expect("listed key"));
            s.push('\n');
        }
        s
    }

    /// SHA-256 of [`RunConfig::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
