use alloc::vec::Vec;

use crate::autodiff::ParameterStore;
use crate::frame::MotionSequence;
use crate::math;
use crate::nn::{Encoded, MetricNet};
use crate::Result;

/// Whole-sequence code `[final_h, mean_e]`, the vector the triplet loss
/// compares.
pub fn sequence_code(enc: &Encoded) -> Vec<f32> {
    let mut v = enc.final_h().to_vec();
    v.extend(enc.mean_e());
    v
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    math::sqrt64(
        a.iter()
            .zip(b)
            .map(|(x, y)| ((x - y) as f64) * ((x - y) as f64))
            .sum(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Separation {
    /// Mean code distance over pairs with different class ids.
    pub inter: f64,
    /// Mean code distance over pairs with the same class id.
    pub intra: f64,
}

impl Separation {
    pub fn ratio(&self) -> f64 {
        self.inter / self.intra
    }
}

/// Mean pairwise code distances across and within classes.
pub fn class_separation(
    net: &MetricNet,
    store: &ParameterStore,
    seqs: &[MotionSequence],
) -> Result<Separation> {
    let refs: Vec<&MotionSequence> = seqs.iter().collect();
    let codes: Vec<Vec<f32>> = net
        .encode(store, &refs)?
        .iter()
        .map(sequence_code)
        .collect();
    let (mut inter, mut n_inter, mut intra, mut n_intra) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..seqs.len() {
        for j in i + 1..seqs.len() {
            let d = euclid(&codes[i], &codes[j]);
            if seqs[i].class_id == seqs[j].class_id {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    Ok(Separation {
        inter: inter / n_inter.max(1) as f64,
        intra: intra / n_intra.max(1) as f64,
    })
}
