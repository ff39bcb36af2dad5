//! Files, configuration and the command line around `virl-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
mod error;
pub mod metrics;
pub mod pgm;
pub mod run;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{Error, Result};
