use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::Array;
use crate::math;

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Array {
    let limit = math::sqrt(6.0 / (fan_in + fan_out) as f32);
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n).map(|_| rng.random_range(-limit..limit)).collect();
    Array::new(shape.to_vec(), data).expect("shape and data agree")
}

/// Inverted-dropout mask: kept entries are `1 / (1 - rate)`, dropped are 0.
pub fn dropout_mask<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], rate: f32) -> Array {
    let n: usize = shape.iter().product();
    let keep = 1.0 / (1.0 - rate);
    let data: Vec<f32> = (0..n)
        .map(|_| {
            if rng.random::<f32>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    Array::new(shape.to_vec(), data).expect("shape and data agree")
}
