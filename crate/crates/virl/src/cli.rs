//! Command-line surface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::run::{self, CHECKPOINT_FILE, CONFIG_FILE, EMBEDDINGS_FILE};
use crate::Result;

#[derive(Parser, Debug)]
#[command(
    name = "virl",
    version,
    about = "Visual imitation with a learned recurrent distance",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// key = value config file; defaults apply to missing keys. eval and
    /// export-embeddings fall back to OUT/config.txt.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (for eval: the evaluation seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    pub out: PathBuf,
    /// Rounds for train, steps for pretrain-metric.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long, value_parser = ["spatial", "temporal", "combined"])]
    pub mode: Option<String>,
    #[arg(long, value_parser = ["normalized", "negdist"])]
    pub reward: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    pub rsi: Option<String>,
    #[arg(long, value_parser = ["on", "off"])]
    pub warp: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the interleaved metric and policy training loop.
    Train(Common),
    /// Train the metric on demonstration clips only.
    PretrainMetric(Common),
    /// Mean and std of the oracle return of a checkpointed policy.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to OUT/checkpoint.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write class id, source and final temporal encoding per sequence.
    ExportEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Policy rollouts to include next to the expert sequences.
        #[arg(long, default_value_t = 25)]
        policy_episodes: usize,
    },
    /// Finite-difference check of every primitive and composed loss.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Random instances per primitive.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Dump demonstration frames as PGM.
    RenderDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        frames: usize,
    },
}

/// Loads the config file and applies flag overrides. `with_seed` is false
/// for commands where `--seed` means something else.
fn resolve(c: &Common, with_seed: bool) -> Result<RunConfig> {
    // Commands reading a run fall back to the config that run wrote.
    let saved = c.out.join(CONFIG_FILE);
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None if !with_seed && saved.is_file() => RunConfig::load(&saved)?,
        None => RunConfig::default(),
    };
    if with_seed {
        if let Some(s) = c.seed {
            cfg.set("seed", &s.to_string())?;
        }
    }
    if let Some(r) = c.rounds {
        cfg.rounds = r;
        cfg.pretrain_steps = r;
    }
    for (key, v) in [
        ("mode", &c.mode),
        ("reward", &c.reward),
        ("rsi", &c.rsi),
        ("warp", &c.warp),
    ] {
        if let Some(v) = v {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn checkpoint_or_default(ck: &Option<PathBuf>, out: &Path) -> PathBuf {
    ck.clone().unwrap_or_else(|| out.join(CHECKPOINT_FILE))
}

fn execute(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train(c) => {
            let cfg = resolve(&c, true)?;
            let res = run::run_training(&cfg, &c.out, |s| {
                println!(
                    "round {} steps {} reward {:.4} oracle {:.3} len {:.1} kl {:.4}",
                    s.round,
                    s.env_steps,
                    s.mean_reward,
                    s.mean_oracle_return,
                    s.mean_episode_len,
                    s.policy_kl
                );
            })?;
            println!("wrote {}", res.checkpoint.display());
        }
        Command::PretrainMetric(c) => {
            let cfg = resolve(&c, true)?;
            let res = run::pretrain_metric(&cfg, cfg.pretrain_steps, &c.out, |step, r| {
                if step % 100 == 0 {
                    println!(
                        "step {step} triplet {:.4} vae {:.4} seq_ae {:.4}",
                        r.triplet, r.vae, r.seq_ae
                    );
                }
            })?;
            println!(
                "held-out inter/intra ratio {:.3} -> {:.3}; wrote {}",
                res.before.ratio(),
                res.after.ratio(),
                res.checkpoint.display()
            );
        }
        Command::Eval { common, checkpoint } => {
            let cfg = resolve(&common, false)?;
            let ck = checkpoint_or_default(&checkpoint, &common.out);
            let s = run::eval(&cfg, &ck, common.seed.unwrap_or(cfg.train.seed))?;
            println!(
                "oracle return {:.4} ± {:.4} over {} episodes",
                s.mean(),
                s.std(),
                s.returns.len()
            );
        }
        Command::ExportEmbeddings {
            common,
            checkpoint,
            policy_episodes,
        } => {
            let cfg = resolve(&common, false)?;
            let ck = checkpoint_or_default(&checkpoint, &common.out);
            let path = common.out.join(EMBEDDINGS_FILE);
            let n = run::export_embeddings(&cfg, &ck, policy_episodes, &path)?;
            println!("wrote {n} rows to {}", path.display());
        }
        Command::Gradcheck { common, instances } => {
            let seed = common.seed.unwrap_or(0);
            let mut ok = true;
            for r in run::gradcheck(seed, instances)? {
                let verdict = if r.passed() { "ok" } else { "FAIL" };
                println!(
                    "{verdict:4} {:<28} max rel error {:.3e} (tol {:.0e})",
                    r.name, r.max_rel_error, r.tol
                );
                ok &= r.passed();
            }
            return Ok(if ok { 0 } else { 1 });
        }
        Command::RenderDemo { common, frames } => {
            let cfg = resolve(&common, true)?;
            let paths = run::render_demo(&cfg, frames, &common.out)?;
            println!("wrote {} frames to {}", paths.len(), common.out.display());
        }
    }
    Ok(0)
}

/// Parses `argv` and runs the command. Usage errors return 2, runtime
/// errors 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
