//! Learned space-and-time distance between rendered motion sequences, used as
//! the reward for a policy-gradient agent imitating a single demonstration.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, the clock or the command line lives in the companion `virl`
//! crate.
//!
//! Layout:
//! - [`autodiff`]: dense arrays, a define-then-run reverse-mode graph,
//!   parameter storage, optimizers and finite-difference checking.
//! - [`nn`]: the frame encoder, LSTM sequence encoder, VAE head and decoders.
//! - [`metric`]: triplet / VAE / sequence-AE losses, the metric training step,
//!   per-step distance profiles and the shaped reward.
//! - [`pairs`]: positive/negative pair construction, EESP cropping and the
//!   experience memory.
//! - [`env`]: a planar three-link chain with PD joint control, a rasterizer,
//!   parametric demonstration clips and the hidden oracle reward.
//! - [`rl`]: Gaussian policy, value function, GAE and the KL-constrained
//!   policy update.
//! - [`checks`]: the finite-difference suite over primitives and composed
//!   losses.
//! - [`train`]: the round loop tying rollouts, metric training and policy
//!   updates together.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod checks;
pub mod env;
mod error;
pub mod frame;
pub mod math;
pub mod metric;
pub mod nn;
pub mod pairs;
pub mod rl;
pub mod rng;
pub mod train;

pub use autodiff::{Array, Graph, Inputs, NodeId, ParamId, ParameterStore};
pub use error::{Error, Result};
pub use frame::{Frame, MotionSequence};
