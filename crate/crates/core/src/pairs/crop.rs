use alloc::vec::Vec;

use rand::Rng;

use super::memory::Episode;
use crate::frame::MotionSequence;
use crate::{Error, Result};

/// Start-index distribution `p(i) = (L - i) / sum_j (L - j)` for `i < L`.
pub fn eesp_probabilities(len: usize) -> Vec<f64> {
    let total = (len * (len + 1) / 2) as f64;
    (0..len).map(|i| (len - i) as f64 / total).collect()
}

/// Draws `i` in `[0, n)` with weight `n - i`.
fn linear_decay<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    let total = n * (n + 1) / 2;
    let mut u = rng.random_range(0..total);
    for i in 0..n {
        let w = n - i;
        if u < w {
            return i;
        }
        u -= w;
    }
    unreachable!("u < total")
}

/// Crop start favouring early steps. `len` must be at least 1.
pub fn eesp_crop_start<R: Rng + ?Sized>(len: usize, rng: &mut R) -> usize {
    assert!(len >= 1, "empty range");
    linear_decay(rng, len)
}

/// Window length in `[min, max]`, shorter windows more likely.
pub fn sample_window_len<R: Rng + ?Sized>(rng: &mut R, min: usize, max: usize) -> usize {
    min + linear_decay(rng, max - min + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub min_len: usize,
    /// Upper bound on the window length; `None` allows the whole remainder.
    pub max_len: Option<usize>,
}

impl Default for CropSpec {
    fn default() -> Self {
        Self {
            min_len: 4,
            max_len: None,
        }
    }
}

impl CropSpec {
    /// `(start, len)` for a sequence of length `total`.
    pub fn sample<R: Rng + ?Sized>(&self, total: usize, rng: &mut R) -> Result<(usize, usize)> {
        let min = self.min_len.max(1);
        if total < min {
            return Err(Error::TooShort {
                need: min,
                got: total,
            });
        }
        // Only starts that leave room for a minimum window.
        let start = eesp_crop_start(total - min + 1, rng);
        let mut max = total - start;
        if let Some(cap) = self.max_len {
            max = max.min(cap.max(min));
        }
        Ok((start, sample_window_len(rng, min, max)))
    }

    pub fn crop<R: Rng + ?Sized>(
        &self,
        seq: &MotionSequence,
        rng: &mut R,
    ) -> Result<MotionSequence> {
        let (s, l) = self.sample(seq.len(), rng)?;
        Ok(seq.window(s, l))
    }
}

/// Cuts the agent and demonstration sequences of `episode` at the same
/// `(start, len)`.
pub fn crop_window<R: Rng + ?Sized>(
    episode: &Episode,
    rng: &mut R,
    spec: CropSpec,
) -> Result<(MotionSequence, MotionSequence)> {
    let (s, l) = spec.sample(episode.len(), rng)?;
    Ok((episode.agent.window(s, l), episode.demo.window(s, l)))
}
