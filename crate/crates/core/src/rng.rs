//! Seeded random streams. One master seed fans out into independent ChaCha
//! streams so every module draws from its own sequence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StreamRng = ChaCha8Rng;

/// Named stream ids. Keeping them here makes collisions visible.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const PAIRS: u64 = 4;
    pub const METRIC: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const LIBRARY: u64 = 7;
    pub const HELDOUT: u64 = 8;
    pub const DEMOS: u64 = 9;
}

pub fn derive(master: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id);
    rng
}

#[inline]
pub fn normal<R: Rng + ?Sized>(rng: &mut R) -> f32 {
    rng.sample(StandardNormal)
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> alloc::vec::Vec<f32> {
    (0..n).map(|_| normal(rng)).collect()
}
