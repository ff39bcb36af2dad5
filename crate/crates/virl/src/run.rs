//! The subcommands as library functions.

use std::path::{Path, PathBuf};
use std::time::Instant;

use virl_core::checks::{full_suite, CheckResult};
use virl_core::metric::{class_separation, LossReport, Separation};
use virl_core::nn::MetricNet;
use virl_core::rl::rollout_episode;
use virl_core::rng::{derive, stream};
use virl_core::train::{render_library, EvalSummary, RoundStats, Trainer};
use virl_core::{MotionSequence, ParameterStore};

use crate::checkpoint::{arch_hash, Checkpoint};
use crate::config::RunConfig;
use crate::metrics::{
    loss_line, metrics_line, CsvLog, LOSS_COLUMNS, METRICS_COLUMNS, TIMING_COLUMNS,
};
use crate::{pgm, Error, Result};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const METRIC_CHECKPOINT_FILE: &str = "metric.ckpt";
pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const LOSS_FILE: &str = "pretrain_loss.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    let p = out.join(CONFIG_FILE);
    std::fs::write(&p, cfg.to_text()).map_err(|e| Error::io(&p, e))
}

/// A trainer with the pretrained metric loaded when the config names one.
pub fn build_trainer(cfg: &RunConfig) -> Result<Trainer> {
    let mut t = Trainer::new(cfg.train.clone())?;
    if let Some(path) = &cfg.pretrained {
        let ck = Checkpoint::load(path)?;
        t.load_metric(&ck.store)?;
    }
    Ok(t)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub rounds: Vec<RoundStats>,
    pub checkpoint: PathBuf,
}

/// Runs `cfg.rounds` rounds, writing `config.txt`, `metrics.csv`,
/// `timing.csv` and `checkpoint.ckpt` under `out`. On a failing round the
/// parameters from the last good round are checkpointed before the error
/// is returned.
pub fn run_training(
    cfg: &RunConfig,
    out: &Path,
    mut on_round: impl FnMut(&RoundStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ensure_dir(out)?;
    write_config(cfg, out)?;
    let hash = cfg.hash();
    let mut trainer = build_trainer(cfg)?;
    let mut metrics = CsvLog::create(&out.join(METRICS_FILE), &METRICS_COLUMNS)?;
    let mut timing = CsvLog::create(&out.join(TIMING_FILE), &TIMING_COLUMNS)?;
    let final_path = out.join(CHECKPOINT_FILE);
    let start = Instant::now();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    for r in 0..cfg.rounds {
        let last_good = trainer.store.clone();
        let stats = match trainer.round() {
            Ok(s) => s,
            Err(e) => {
                Checkpoint::new(hash, r, last_good).save(&final_path)?;
                return Err(e.into());
            }
        };
        metrics.row(&metrics_line(&stats))?;
        timing.row(&format!(
            "{},{:.3}",
            stats.round,
            start.elapsed().as_secs_f64()
        ))?;
        on_round(&stats);
        rounds.push(stats);
        if cfg.checkpoint_every > 0 && (r + 1) % cfg.checkpoint_every == 0 && r + 1 < cfg.rounds {
            let p = out.join(format!("checkpoint_round_{:05}.ckpt", r + 1));
            Checkpoint::new(hash.clone(), r + 1, trainer.store.clone()).save(&p)?;
        }
    }
    Checkpoint::new(hash, trainer.rounds_done(), trainer.store.clone()).save(&final_path)?;
    Ok(TrainOutcome {
        rounds,
        checkpoint: final_path,
    })
}

/// Held-out renderings, `per_class` per library class, from their own stream.
pub fn heldout_sequences(trainer: &Trainer, per_class: usize) -> Vec<MotionSequence> {
    let cfg = &trainer.config;
    let mut rng = derive(cfg.seed, stream::HELDOUT);
    render_library(
        trainer.clips(),
        per_class,
        cfg.library_len,
        &cfg.env,
        &mut rng,
    )
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub losses: Vec<LossReport>,
    pub before: Separation,
    pub after: Separation,
    pub checkpoint: PathBuf,
    pub net: MetricNet,
    pub store: ParameterStore,
    pub heldout: Vec<MotionSequence>,
}

/// Trains only the metric, on library class pairs and augmentations of
/// demonstration pseudo-episodes. Writes `metric.ckpt` and
/// `pretrain_loss.csv` under `out`.
pub fn pretrain_metric(
    cfg: &RunConfig,
    steps: usize,
    out: &Path,
    mut on_step: impl FnMut(usize, &LossReport),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    ensure_dir(out)?;
    write_config(cfg, out)?;
    let mut trainer = Trainer::new(cfg.train.clone())?;
    let demos = trainer.demo_memory(cfg.pretrain_episodes, cfg.train.library_len)?;
    let heldout = heldout_sequences(&trainer, cfg.heldout_per_class);
    let before = class_separation(&trainer.net, &trainer.store, &heldout)?;
    let mut log = CsvLog::create(&out.join(LOSS_FILE), &LOSS_COLUMNS)?;
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let r = trainer.pretrain_step(&demos)?;
        log.row(&loss_line(step + 1, &r))?;
        on_step(step + 1, &r);
        losses.push(r);
    }
    let after = class_separation(&trainer.net, &trainer.store, &heldout)?;
    let path = out.join(METRIC_CHECKPOINT_FILE);
    Checkpoint::new(cfg.hash(), 0, trainer.store.clone()).save(&path)?;
    Ok(PretrainOutcome {
        losses,
        before,
        after,
        checkpoint: path,
        net: trainer.net.clone(),
        store: trainer.store.clone(),
        heldout,
    })
}

/// A trainer holding the checkpoint's parameters, after checking that the
/// checkpoint was written for this config and architecture.
pub fn load_trained(cfg: &RunConfig, checkpoint: &Path) -> Result<Trainer> {
    let mut t = Trainer::new(cfg.train.clone())?;
    let ck = Checkpoint::load(checkpoint)?;
    ck.verify(&cfg.hash(), &arch_hash(&t.store))?;
    t.store = ck.store;
    Ok(t)
}

/// Oracle returns of `cfg.eval_episodes` episodes from the checkpointed
/// policy.
pub fn eval(cfg: &RunConfig, checkpoint: &Path, seed: u64) -> Result<EvalSummary> {
    let t = load_trained(cfg, checkpoint)?;
    Ok(t.evaluate(cfg.eval_episodes, seed)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Policy,
    Expert,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::Policy => "policy",
            Source::Expert => "expert",
        }
    }
}

/// Header plus one row per sequence: class id, source, then the final
/// temporal encoding.
pub fn embedding_rows(
    net: &MetricNet,
    store: &ParameterStore,
    seqs: &[(MotionSequence, Source)],
) -> Result<Vec<String>> {
    let mut head = vec!["class_id".to_string(), "source".to_string()];
    head.extend((0..net.arch.embed).map(|i| format!("h{i}")));
    let mut rows = vec![head.join(",")];
    let refs: Vec<&MotionSequence> = seqs.iter().map(|(s, _)| s).collect();
    for (enc, (seq, src)) in net.encode(store, &refs)?.iter().zip(seqs) {
        let mut row = format!("{},{}", seq.class_id, src.tag());
        for v in enc.final_h() {
            row.push(',');
            row.push_str(&v.to_string());
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Expert sequences are held-out renderings of every class. Policy
/// sequences are rollouts of the checkpointed policy on its clip.
pub fn export_embeddings(
    cfg: &RunConfig,
    checkpoint: &Path,
    policy_episodes: usize,
    out: &Path,
) -> Result<usize> {
    let t = load_trained(cfg, checkpoint)?;
    let mut seqs: Vec<(MotionSequence, Source)> = heldout_sequences(&t, cfg.heldout_per_class)
        .into_iter()
        .map(|s| (s, Source::Expert))
        .collect();
    let mut env = virl_core::env::ChainEnv::new(
        cfg.train.env.clone(),
        t.clips()[cfg.train.clip_class].clone(),
    )?;
    let mut rng = derive(cfg.train.seed, stream::EVAL);
    for _ in 0..policy_episodes {
        let (traj, _) = rollout_episode(&mut env, &t.policy, &t.store, false, &mut rng)?;
        seqs.push((traj.agent_sequence(), Source::Policy));
    }
    let rows = embedding_rows(&t.net, &t.store, &seqs)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    let mut text = rows.join("\n");
    text.push('\n');
    std::fs::write(out, text).map_err(|e| Error::io(out, e))?;
    Ok(rows.len() - 1)
}

pub fn gradcheck(seed: u64, instances: usize) -> Result<Vec<CheckResult>> {
    Ok(full_suite(seed, instances)?)
}

/// Writes `frames` demonstration frames of the configured clip, from phase
/// 0 at its base speed, as `demo_000.pgm`, `demo_001.pgm`, ...
pub fn render_demo(cfg: &RunConfig, frames: usize, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    ensure_dir(out)?;
    let clips = virl_core::env::motion_library(cfg.train.library_size);
    let env = &cfg.train.env;
    let seq = clips[cfg.train.clip_class].render_sequence(
        0.0,
        frames,
        env.control_rate,
        env.frame_h,
        env.frame_w,
    );
    let mut paths = Vec::with_capacity(frames);
    for (i, f) in seq.frames.iter().enumerate() {
        let p = out.join(format!("demo_{i:03}.pgm"));
        pgm::write(&p, f)?;
        paths.push(p);
    }
    Ok(paths)
}
