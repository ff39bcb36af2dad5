use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::augment::{make_negative, make_positive, NegativeRule, PositiveRule};
use super::crop::{crop_window, CropSpec};
use super::memory::ExperienceMemory;
use super::FRAME_TOL;
use crate::frame::MotionSequence;
use crate::{Error, Result};

/// Which rule produced a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Provenance {
    Positive(PositiveRule),
    Negative(NegativeRule),
    /// A frame from a different source tiled to the anchor's length; used
    /// when the anchor is frame-constant and the other negatives would be
    /// no-ops.
    ReplicateOther,
    SameClass,
    CrossClass,
}

impl Provenance {
    pub fn tag(self) -> &'static str {
        match self {
            Self::Positive(PositiveRule::Noise) => "pos:noise",
            Self::Positive(PositiveRule::Desync) => "pos:desync",
            Self::Positive(PositiveRule::DupFirst) => "pos:dup_first",
            Self::Positive(PositiveRule::DupLast) => "pos:dup_last",
            Self::Negative(NegativeRule::Reverse) => "neg:reverse",
            Self::Negative(NegativeRule::ReplicateRandom) => "neg:replicate_random",
            Self::Negative(NegativeRule::ShuffleOne) => "neg:shuffle_one",
            Self::Negative(NegativeRule::ShuffleBoth) => "neg:shuffle_both",
            Self::ReplicateOther => "neg:replicate_other",
            Self::SameClass => "class:same",
            Self::CrossClass => "class:cross",
        }
    }

    pub fn is_augmentation(self) -> bool {
        !matches!(self, Self::SameClass | Self::CrossClass)
    }

    /// The label this rule is allowed to produce.
    pub fn positive(self) -> bool {
        matches!(self, Self::Positive(_) | Self::SameClass)
    }
}

#[derive(Clone, Debug)]
pub struct LabeledPair {
    pub anchor: MotionSequence,
    pub other: MotionSequence,
    /// `true` for a positive (similar) pair.
    pub y: bool,
    pub provenance: Provenance,
}

impl LabeledPair {
    fn new(anchor: MotionSequence, other: MotionSequence, provenance: Provenance) -> Self {
        Self {
            anchor,
            other,
            y: provenance.positive(),
            provenance,
        }
    }

    pub fn label(&self) -> f32 {
        if self.y {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchSpec {
    pub pairs: usize,
    /// Probability that an anchor comes from memory augmentation rather than
    /// the class library.
    pub aug_fraction: f64,
    pub crop: CropSpec,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            pairs: 16,
            aug_fraction: 0.5,
            crop: CropSpec::default(),
        }
    }
}

fn is_palindrome(seq: &MotionSequence) -> bool {
    let n = seq.len();
    (0..n / 2).all(|i| seq.frames[i].approx_eq(&seq.frames[n - 1 - i], FRAME_TOL))
}

/// Draws a class from `classes` other than `not`.
fn pick_other_class<R: Rng + ?Sized>(rng: &mut R, classes: &[usize], not: usize) -> usize {
    let pos = classes
        .iter()
        .position(|&c| c == not)
        .expect("class present");
    let k = rng.random_range(0..classes.len() - 1);
    classes[if k >= pos { k + 1 } else { k }]
}

struct Sources<'a> {
    episodes: Vec<usize>,
    memory: &'a ExperienceMemory,
    library: &'a [MotionSequence],
    /// Distinct class ids, sorted, and the library indices of each.
    classes: Vec<usize>,
    by_class: Vec<Vec<usize>>,
}

impl<'a> Sources<'a> {
    fn new(memory: &'a ExperienceMemory, library: &'a [MotionSequence], crop: CropSpec) -> Self {
        let min = crop.min_len.max(2);
        let episodes = (0..memory.len())
            .filter(|&i| memory.get(i).expect("in range").len() >= min)
            .collect();
        let mut classes: Vec<usize> = library
            .iter()
            .filter(|s| s.len() >= min)
            .map(|s| s.class_id)
            .collect();
        classes.sort_unstable();
        classes.dedup();
        let by_class = classes
            .iter()
            .map(|&c| {
                (0..library.len())
                    .filter(|&i| library[i].class_id == c && library[i].len() >= min)
                    .collect()
            })
            .collect();
        Self {
            episodes,
            memory,
            library,
            classes,
            by_class,
        }
    }

    fn has_aug(&self) -> bool {
        !self.episodes.is_empty()
    }

    fn has_class(&self) -> bool {
        self.classes.len() >= 2
    }

    fn clip_of<R: Rng + ?Sized>(&self, rng: &mut R, class: usize) -> &MotionSequence {
        let k = self
            .classes
            .iter()
            .position(|&c| c == class)
            .expect("class present");
        let list = &self.by_class[k];
        &self.library[list[rng.random_range(0..list.len())]]
    }

    /// Any frame not taken from episode `skip`.
    fn foreign_frame<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        skip: usize,
    ) -> Option<crate::frame::Frame> {
        let others: Vec<usize> = self
            .episodes
            .iter()
            .copied()
            .filter(|&e| e != skip)
            .collect();
        let seq = if !others.is_empty() {
            &self
                .memory
                .get(others[rng.random_range(0..others.len())])
                .expect("in range")
                .agent
        } else if !self.library.is_empty() {
            &self.library[rng.random_range(0..self.library.len())]
        } else {
            return None;
        };
        Some(seq.frames[rng.random_range(0..seq.len())].clone())
    }
}

fn augmentation_pairs<R: Rng + ?Sized>(
    src: &Sources<'_>,
    spec: &BatchSpec,
    rng: &mut R,
    out: &mut Vec<LabeledPair>,
) -> Result<()> {
    let ei = src.episodes[rng.random_range(0..src.episodes.len())];
    let episode = src.memory.get(ei).expect("in range");
    let (agent, demo) = crop_window(episode, rng, spec.crop)?;
    let anchor = if rng.random::<bool>() { agent } else { demo };

    let rule = PositiveRule::ALL[rng.random_range(0..PositiveRule::ALL.len())];
    let p = make_positive(&anchor, rng, rule)?;
    out.push(LabeledPair::new(
        p.anchor,
        p.other,
        Provenance::Positive(rule),
    ));

    if anchor.is_constant(FRAME_TOL) {
        if let Some(f) = src.foreign_frame(rng, ei) {
            if !f.approx_eq(&anchor.frames[0], FRAME_TOL) {
                let other = anchor.with_frames(vec![f; anchor.len()]);
                out.push(LabeledPair::new(anchor, other, Provenance::ReplicateOther));
            }
        }
        return Ok(());
    }
    let rules: &[NegativeRule] = if is_palindrome(&anchor) {
        &NegativeRule::ALL[1..]
    } else {
        &NegativeRule::ALL
    };
    let rule = rules[rng.random_range(0..rules.len())];
    let n = make_negative(&anchor, rng, rule)?;
    out.push(LabeledPair::new(
        n.anchor,
        n.other,
        Provenance::Negative(rule),
    ));
    Ok(())
}

fn class_pairs<R: Rng + ?Sized>(
    src: &Sources<'_>,
    spec: &BatchSpec,
    rng: &mut R,
    out: &mut Vec<LabeledPair>,
) -> Result<()> {
    let class = src.classes[rng.random_range(0..src.classes.len())];
    let anchor = spec.crop.crop(src.clip_of(rng, class), rng)?;
    let same = spec.crop.crop(src.clip_of(rng, class), rng)?;
    let other_class = pick_other_class(rng, &src.classes, class);
    let cross = spec.crop.crop(src.clip_of(rng, other_class), rng)?;
    out.push(LabeledPair::new(
        anchor.clone(),
        same,
        Provenance::SameClass,
    ));
    out.push(LabeledPair::new(anchor, cross, Provenance::CrossClass));
    Ok(())
}

/// Builds `spec.pairs` labelled pairs. Each anchor contributes one positive
/// and one negative pair, from memory augmentation with probability
/// `aug_fraction` and from the class library otherwise. When only one source
/// is usable every anchor comes from it.
pub fn build_batch<R: Rng + ?Sized>(
    memory: &ExperienceMemory,
    library: &[MotionSequence],
    spec: &BatchSpec,
    rng: &mut R,
) -> Result<Vec<LabeledPair>> {
    let src = Sources::new(memory, library, spec.crop);
    if !src.has_aug() && !src.has_class() {
        return Err(Error::EmptySources);
    }
    let mut out = Vec::with_capacity(spec.pairs + 1);
    while out.len() < spec.pairs {
        let aug = match (src.has_aug(), src.has_class()) {
            (true, true) => rng.random::<f64>() < spec.aug_fraction,
            (aug, _) => aug,
        };
        if aug {
            augmentation_pairs(&src, spec, rng, &mut out)?;
        } else {
            class_pairs(&src, spec, rng, &mut out)?;
        }
    }
    out.truncate(spec.pairs);
    Ok(out)
}
