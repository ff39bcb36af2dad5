use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::FRAME_TOL;
use crate::frame::{Frame, MotionSequence};
use crate::{math, rng, Error, Result};

/// Per-pixel variance of the additive Gaussian noise positive.
pub const NOISE_VARIANCE: f32 = 0.02;

/// Label-preserving transforms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PositiveRule {
    Noise,
    Desync,
    DupFirst,
    DupLast,
}

/// Transforms that destroy the temporal structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NegativeRule {
    Reverse,
    ReplicateRandom,
    ShuffleOne,
    ShuffleBoth,
}

impl PositiveRule {
    pub const ALL: [PositiveRule; 4] = [Self::Noise, Self::Desync, Self::DupFirst, Self::DupLast];

    pub fn name(self) -> &'static str {
        match self {
            Self::Noise => "noise",
            Self::Desync => "desync",
            Self::DupFirst => "dup_first",
            Self::DupLast => "dup_last",
        }
    }
}

impl NegativeRule {
    pub const ALL: [NegativeRule; 4] = [
        Self::Reverse,
        Self::ReplicateRandom,
        Self::ShuffleOne,
        Self::ShuffleBoth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Reverse => "reverse",
            Self::ReplicateRandom => "replicate_random",
            Self::ShuffleOne => "shuffle_one",
            Self::ShuffleBoth => "shuffle_both",
        }
    }
}

/// The two members of an augmented pair. Most rules leave `anchor` equal to
/// the input; desync and shuffle_both alter both members.
#[derive(Clone, Debug)]
pub struct Augmented {
    pub anchor: MotionSequence,
    pub other: MotionSequence,
}

/// Adds `sqrt(variance) * sample()` to every pixel and clamps to `[0,1]`.
pub fn add_noise(
    seq: &MotionSequence,
    variance: f32,
    mut sample: impl FnMut() -> f32,
) -> MotionSequence {
    let std = math::sqrt(variance);
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let mut out = f.clone();
            for p in out.pixels_mut() {
                *p = (*p + std * sample()).clamp(0.0, 1.0);
            }
            out
        })
        .collect();
    seq.with_frames(frames)
}

fn need(seq: &MotionSequence, n: usize) -> Result<()> {
    if seq.len() < n {
        return Err(Error::TooShort {
            need: n,
            got: seq.len(),
        });
    }
    Ok(())
}

pub fn make_positive<R: Rng + ?Sized>(
    seq: &MotionSequence,
    rng: &mut R,
    rule: PositiveRule,
) -> Result<Augmented> {
    if rule == PositiveRule::Noise {
        if seq.is_empty() {
            return Err(Error::EmptySequence);
        }
        let other = add_noise(seq, NOISE_VARIANCE, || rng::normal(rng));
        return Ok(Augmented {
            anchor: seq.clone(),
            other,
        });
    }
    need(seq, 2)?;
    let l = seq.len();
    let (anchor, other) = match rule {
        PositiveRule::Desync => (seq.window(1, l - 1), seq.window(0, l - 1)),
        PositiveRule::DupFirst => {
            let mut f = Vec::with_capacity(l);
            f.push(seq.frames[0].clone());
            f.extend_from_slice(&seq.frames[..l - 1]);
            (seq.clone(), seq.with_frames(f))
        }
        PositiveRule::DupLast => {
            let mut f: Vec<Frame> = seq.frames[1..].to_vec();
            f.push(seq.frames[l - 1].clone());
            (seq.clone(), seq.with_frames(f))
        }
        PositiveRule::Noise => unreachable!(),
    };
    Ok(Augmented { anchor, other })
}

const SHUFFLE_TRIES: usize = 32;

/// A permutation of `seq` that differs from it. Non-constant input
/// guarantees one exists; after a few random tries fall back to swapping the
/// first adjacent pair that differs.
fn shuffled<R: Rng + ?Sized>(
    seq: &MotionSequence,
    rng: &mut R,
    avoid: &MotionSequence,
) -> MotionSequence {
    let mut frames = seq.frames.clone();
    for _ in 0..SHUFFLE_TRIES {
        frames.shuffle(rng);
        let cand = seq.with_frames(frames.clone());
        if !cand.approx_eq(avoid, FRAME_TOL) {
            return cand;
        }
    }
    let mut frames = avoid.frames.clone();
    let i = (0..frames.len() - 1)
        .find(|&i| !frames[i].approx_eq(&frames[i + 1], FRAME_TOL))
        .expect("non-constant sequence has a differing neighbour pair");
    frames.swap(i, i + 1);
    seq.with_frames(frames)
}

pub fn make_negative<R: Rng + ?Sized>(
    seq: &MotionSequence,
    rng: &mut R,
    rule: NegativeRule,
) -> Result<Augmented> {
    need(seq, 2)?;
    let l = seq.len();
    if rule != NegativeRule::ReplicateRandom && seq.is_constant(FRAME_TOL) {
        return Err(Error::DegenerateSequence);
    }
    match rule {
        NegativeRule::Reverse => {
            let mut f = seq.frames.clone();
            f.reverse();
            let other = seq.with_frames(f);
            if other.approx_eq(seq, FRAME_TOL) {
                // A palindrome reverses onto itself.
                return Err(Error::DegenerateSequence);
            }
            Ok(Augmented {
                anchor: seq.clone(),
                other,
            })
        }
        NegativeRule::ReplicateRandom => {
            let k = rng.random_range(0..l);
            let other = seq.with_frames(alloc::vec![seq.frames[k].clone(); l]);
            Ok(Augmented {
                anchor: seq.clone(),
                other,
            })
        }
        NegativeRule::ShuffleOne => Ok(Augmented {
            anchor: seq.clone(),
            other: shuffled(seq, rng, seq),
        }),
        NegativeRule::ShuffleBoth => {
            let anchor = shuffled(seq, rng, seq);
            let other = shuffled(seq, rng, &anchor);
            Ok(Augmented { anchor, other })
        }
    }
}
