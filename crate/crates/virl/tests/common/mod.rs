#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use virl::RunConfig;

/// Small enough that a round takes a fraction of a second.
pub const TINY: &str = "\
seed = 11
frame_size = 16
max_steps = 20
library_per_class = 2
library_len = 8
policy_hidden = 16
value_hidden = 16
samples_per_round = 48
value_steps = 2
metric_steps = 1
pairs = 2
crop_max = 8
eval_episodes = 2
heldout_per_class = 2
pretrain_episodes = 4
";

pub fn tiny() -> RunConfig {
    RunConfig::parse(TINY).unwrap()
}

pub fn write_tiny(dir: &Path, extra: &str) -> std::path::PathBuf {
    let p = dir.join("tiny.txt");
    std::fs::write(&p, format!("{TINY}{extra}")).unwrap();
    p
}

pub fn virl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_virl"))
        .args(args)
        .output()
        .unwrap()
}
