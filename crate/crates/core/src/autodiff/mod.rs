//! Minimal reverse-mode automatic differentiation over dense `f32` arrays.
//!
//! A [`Graph`] is built first (define), then evaluated with [`Graph::forward`]
//! against a [`ParameterStore`] and a set of named [`Inputs`] (run). Every
//! node value is cached so [`Graph::backward`] can propagate a seed back to
//! the parameters, whose gradient slots accumulate additively until the caller
//! zeroes them.

mod array;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod optim;
mod params;

pub use array::Array;
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use graph::{Graph, Inputs, NodeId, NORM_EPS};
pub use optim::Adam;
pub use params::{ParamId, ParameterStore};
