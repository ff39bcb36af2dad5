//! CSV logs. Numbers use Rust's shortest round-trip formatting, so identical
//! runs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use virl_core::metric::LossReport;
use virl_core::train::RoundStats;

use crate::{Error, Result};

/// Round-level columns, in file order.
pub const METRICS_COLUMNS: [&str; 10] = [
    "round",
    "env_steps",
    "mean_metric_reward",
    "mean_oracle_return",
    "mean_episode_len",
    "triplet",
    "vae",
    "seq_ae",
    "policy_kl",
    "value_mse",
];

pub const TIMING_COLUMNS: [&str; 2] = ["round", "wall_time_s"];

pub const LOSS_COLUMNS: [&str; 5] = ["step", "triplet", "vae", "seq_ae", "total"];

pub fn metrics_line(s: &RoundStats) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        s.round,
        s.env_steps,
        s.mean_reward,
        s.mean_oracle_return,
        s.mean_episode_len,
        s.triplet,
        s.vae,
        s.seq_ae,
        s.policy_kl,
        s.value_mse
    )
}

pub fn loss_line(step: usize, r: &LossReport) -> String {
    format!("{step},{},{},{},{}", r.triplet, r.vae, r.seq_ae, r.total)
}

/// Line-buffered CSV file that flushes after every row.
pub struct CsvLog {
    out: BufWriter<File>,
    path: String,
}

impl CsvLog {
    pub fn create(path: &Path, columns: &[&str]) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut log = Self {
            out: BufWriter::new(f),
            path: path.display().to_string(),
        };
        log.row(&columns.join(","))?;
        Ok(log)
    }

    pub fn row(&mut self, line: &str) -> Result<()> {
        let r = writeln!(self.out, "{line}").and_then(|_| self.out.flush());
        r.map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}
